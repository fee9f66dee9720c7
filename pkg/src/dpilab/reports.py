"""Artifact writers: deterministic JSON/CSV plus the run manifest.

Every artifact embeds the config hash so mismatched re-runs are detectable;
the only timestamp lives in the manifest.  Floats are written with repr,
which round-trips exactly, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

__all__ = ["sha256_bytes", "write_json", "write_manifest"]


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir, config_hash: str, config_path: str,
                   derived: dict, artifacts: list[str]) -> None:
    from . import __version__

    payload = {
        "config_sha256": config_hash,
        "config_path": config_path,
        "derived_params": derived,
        "artifacts": sorted(artifacts),
        "versions": {
            "dpilab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc)
                         .isoformat(),
    }
    write_json(Path(out_dir) / "manifest.json", payload)
