"""Experiment configuration: a plain-text INI schema, one experiment per file.

Sections:
  [experiment]  kind = verify | compare | gravity | evolve | cosmo; seed
  [dpi]         u0, alpha_s, alpha_l
  [constants]   hbar, mass, g_newton (optional, default 1)
  [output]      directory (optional, overridable on the command line)
plus one kind-specific section named after the kind.  Commented example
files for every kind ship in configs/.

Parsing failures (bad syntax, missing keys, unparseable numbers) and
semantic failures (out-of-range values) are distinguished so the command
line can exit with the right category.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DpilabError, ParameterRangeError
from .params import DpiParams, PhysicalConstants

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "KINDS"]

KINDS = ("verify", "compare", "gravity", "evolve", "cosmo")


class ConfigError(DpilabError):
    """Raised for unusable configs; category is 'parse' or 'validation'."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]


def _ints(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]


def _vectors(raw: str) -> list[list[float]]:
    """Semicolon-separated triples: 'x y z; x y z; ...'."""
    out = []
    for chunk in raw.split(";"):
        if not chunk.strip():
            continue
        comps = [float(tok) for tok in chunk.split()]
        if len(comps) != 3:
            raise ValueError(f"expected 3 components per vector, got {chunk!r}")
        out.append(comps)
    return out


@dataclass
class ExperimentConfig:
    kind: str
    seed: int | None
    dpi: DpiParams
    constants: PhysicalConstants
    output_dir: str
    options: dict = field(default_factory=dict)
    source_path: str = ""
    source_bytes: bytes = b""


def _require(section, key: str, where: str):
    if key not in section:
        raise ConfigError("parse", f"missing key '{key}' in [{where}]")
    return section[key]


def load_config(path) -> ExperimentConfig:
    """Parse and validate; raises ConfigError with a category."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError("parse", f"cannot read config: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(raw.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError("parse", f"config syntax: {exc}") from exc

    try:
        if "experiment" not in parser:
            raise ConfigError("parse", "missing [experiment] section")
        exp = parser["experiment"]
        kind = _require(exp, "kind", "experiment").strip()
        seed = int(exp["seed"]) if "seed" in exp else None

        if "dpi" not in parser:
            raise ConfigError("parse", "missing [dpi] section")
        dpi_sec = parser["dpi"]
        u0 = float(_require(dpi_sec, "u0", "dpi"))
        alpha_s = float(_require(dpi_sec, "alpha_s", "dpi"))
        alpha_l = float(_require(dpi_sec, "alpha_l", "dpi"))

        consts_sec = parser["constants"] if "constants" in parser else {}
        hbar = float(consts_sec.get("hbar", 1.0))
        mass = float(consts_sec.get("mass", 1.0))
        g_newton = float(consts_sec.get("g_newton", 1.0))

        out_dir = (parser["output"].get("directory", "out")
                   if "output" in parser else "out")

        options = _parse_kind_options(parser, kind)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError("parse", f"config value: {exc}") from exc

    if kind not in KINDS:
        raise ConfigError("validation",
                          f"unknown experiment kind {kind!r}; "
                          f"expected one of {', '.join(KINDS)}")
    if kind == "compare" and seed is None:
        raise ConfigError("validation",
                          "compare experiments sample configurations and "
                          "need an explicit seed")
    try:
        dpi = DpiParams(u0=u0, alpha_s=alpha_s, alpha_l=alpha_l)
        constants = PhysicalConstants(hbar=hbar, mass=mass, g_newton=g_newton)
    except ParameterRangeError as exc:
        raise ConfigError("validation", str(exc)) from exc
    _validate_kind_options(kind, options)

    return ExperimentConfig(kind=kind, seed=seed, dpi=dpi,
                            constants=constants, output_dir=out_dir,
                            options=options, source_path=str(p),
                            source_bytes=raw)


def _parse_kind_options(parser: configparser.ConfigParser, kind: str) -> dict:
    sec = parser[kind] if kind in parser else {}
    opts: dict = {}
    if kind == "verify":
        opts["beta_values"] = _floats(sec.get("beta_values", "0,0.25,0.5,0.75,1"))
        opts["d_values"] = _floats(sec.get("d_values", "0,0.75,1.5,2.25,3"))
        opts["alpha_s_values"] = _floats(
            sec.get("alpha_s_values", "0.5,0.75,1,1.5,2"))
        opts["gh_points"] = int(sec.get("gh_points", 64))
    elif kind == "compare":
        opts["t_values"] = tuple(_floats(sec.get("t_values", "0.25,0.1,0.05")))
        opts["s_values"] = tuple(_floats(sec.get("s_values", "2,5,10")))
        opts["n_values"] = tuple(_ints(sec.get("n_values", "1,16,256")))
        opts["probes_per_cell"] = int(sec.get("probes_per_cell", 32))
        opts["orders"] = tuple(_ints(sec.get("orders", "1,2")))
        opts["cloud_spread"] = float(sec.get("cloud_spread", 25.0))
        opts["include_integral"] = sec.get("include_integral",
                                           "false").lower() == "true"
    elif kind == "gravity":
        opts["zeta"] = float(sec.get("zeta", 1.0))
        opts["xi_factor"] = float(sec.get("xi_factor", 1e-3))
        opts["r_min_units"] = float(sec.get("r_min_units", 10.0))
        opts["r_max_units"] = float(sec.get("r_max_units", 100.0))
        opts["num_radii"] = int(sec.get("num_radii", 24))
        opts["variant"] = sec.get("variant", "ambient").strip()
        opts["rho0"] = float(sec.get("rho0", 1.0))
    elif kind == "evolve":
        opts["mode"] = sec.get("mode", "kepler").strip()
        opts["steps"] = int(sec.get("steps", 1000))
        opts["dt"] = float(sec.get("dt", 0.001))
        opts["separation"] = float(sec.get("separation", 1.0))
        opts["include_quantum"] = sec.get("include_quantum",
                                          "false").lower() == "true"
        opts["include_gravity"] = sec.get("include_gravity",
                                          "true").lower() == "true"
        if "positions" in sec:
            opts["positions"] = _vectors(sec["positions"])
        if "velocities" in sec:
            opts["velocities"] = _vectors(sec["velocities"])
        if "transform_file" in sec:
            opts["transform_file"] = sec["transform_file"].strip()
    elif kind == "cosmo":
        opts["radius0"] = float(sec.get("radius0", 1.0))
        opts["rdot_values"] = _floats(sec.get("rdot_values", "1,2,4"))
        opts["rho_values"] = _floats(sec.get("rho_values", "1,4,16"))
        opts["hbar0"] = float(sec.get("hbar0", 1.0))
        opts["g0"] = float(sec.get("g0", 1.0))
    return opts


def _validate_kind_options(kind: str, opts: dict) -> None:
    def bad(msg: str):
        raise ConfigError("validation", msg)

    if kind == "verify":
        if opts["gh_points"] < 2:
            bad("gh_points must be >= 2")
        if min(opts["alpha_s_values"]) <= 0:
            bad("alpha_s_values must be positive")
    elif kind == "compare":
        if min(opts["t_values"]) <= 0 or max(opts["t_values"]) > 0.5:
            bad("t_values must lie in (0, 0.5]")
        if min(opts["s_values"]) <= 0:
            bad("s_values must be positive")
        if min(opts["n_values"]) < 1:
            bad("n_values must be >= 1")
        if opts["probes_per_cell"] < 1:
            bad("probes_per_cell must be >= 1")
    elif kind == "gravity":
        if opts["zeta"] <= 0 or opts["xi_factor"] <= 0:
            bad("zeta and xi_factor must be positive")
        if opts["r_min_units"] < 10.0:
            bad("r_min_units must be >= 10 (chain invalid closer in)")
        if opts["r_max_units"] <= opts["r_min_units"]:
            bad("r_max_units must exceed r_min_units")
        if opts["num_radii"] < 5:
            bad("num_radii must be >= 5 for the tail fit")
        if opts["variant"] not in ("pure", "ambient", "superposition"):
            bad(f"unknown gravity variant {opts['variant']!r}")
        if opts["variant"] != "pure" and opts["rho0"] <= 0:
            bad("rho0 must be positive for background variants")
    elif kind == "evolve":
        if opts["mode"] not in ("kepler", "inline"):
            bad(f"unknown evolve mode {opts['mode']!r}")
        if opts["steps"] < 1 or opts["dt"] <= 0:
            bad("steps must be >= 1 and dt > 0")
        if opts["mode"] == "inline":
            if "positions" not in opts or "velocities" not in opts:
                bad("inline evolve needs positions and velocities")
            if len(opts["positions"]) != len(opts["velocities"]):
                bad("positions and velocities must have the same length")
        if opts["mode"] == "kepler" and opts["separation"] <= 0:
            bad("kepler separation must be positive")
    elif kind == "cosmo":
        if len(opts["rdot_values"]) != len(opts["rho_values"]):
            bad("rdot_values and rho_values must have the same length")
        if min(opts["rho_values"]) <= 0:
            bad("rho_values must be positive")
        if opts["radius0"] <= 0:
            bad("radius0 must be positive")
