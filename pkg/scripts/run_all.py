#!/usr/bin/env python3
"""Run every shipped example config into out/."""

import pathlib
import subprocess
import sys

HERE = pathlib.Path(__file__).resolve().parent.parent

def main() -> int:
    status = 0
    for config in sorted((HERE / "configs").glob("*.ini")):
        print(f"== {config.name}")
        proc = subprocess.run([sys.executable, "-m", "dpilab.cli",
                               str(config)], cwd=HERE)
        status = max(status, proc.returncode)
    return status

if __name__ == "__main__":
    raise SystemExit(main())
