"""Command-line experiment runner.

    dpilab CONFIG [--out DIR] [--seed N] [--threads N] [--dry-run]

One config file describes one experiment; results land in the output
directory as CSV/JSON plus a manifest recording the config hash, derived
constants and versions.  Exit codes: 0 success, 2 parse error, 3 validation
error, 4 numerical failure, each with a single-line reason on stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .density import RadialShell, Superposition, Uniform
from .dynamics import (
    TransformSpec,
    check_leibnitz_invariance,
    CosmologyState,
    g_scaling,
    hbar_scaling,
    integrate_effective,
)
from .equivalence import SweepSpec, run_equivalence_sweep, verify_insertion_identity
from .errors import DpilabError
from .gravity import (
    RadialSeriesSpec,
    effective_coupling,
    fit_power_law,
    radial_series_potential,
)
from .params import derive_params
from .potentials import gaussian_heat_action_check
from .quadrature import QuadratureSpec
from .reports import sha256_bytes, write_json, write_manifest

__all__ = ["main", "describe", "run_experiment"]

# fixed oblique unit direction for the insertion-identity offsets
_DIRECTION = np.array([0.36, 0.48, 0.8])


def describe(cfg: ExperimentConfig) -> str:
    """Human-readable plan: derived constants and what would run."""
    derived = derive_params(cfg.dpi)
    lines = [
        f"experiment kind: {cfg.kind}",
        f"seed: {cfg.seed if cfg.seed is not None else '(none)'}",
        f"interaction: u0={cfg.dpi.u0:.6g} alpha_s={cfg.dpi.alpha_s:.6g} "
        f"alpha_l={cfg.dpi.alpha_l:.6g}",
        "derived constants:",
        f"  beta       = {derived.beta:.6f}",
        f"  gamma      = {derived.gamma:.6f}",
        f"  epsilon    = {derived.epsilon:.6f}",
        f"  omega      = {derived.omega:.6f}",
        f"  prefactor  = {derived.prefactor_c:.6f}",
        f"  coupling   = {derived.quantum_coupling:.6f}",
    ]
    o = cfg.options
    if cfg.kind == "verify":
        ncells = (len(o["beta_values"]) * len(o["d_values"])
                  * len(o["alpha_s_values"]))
        lines.append(f"plan: insertion-identity grid of {ncells} cells at "
                     f"{o['gh_points']} quadrature points per axis, plus the "
                     f"smoothing-action report")
    elif cfg.kind == "compare":
        lines.append(f"plan: agreement sweep over t={o['t_values']} "
                     f"s={o['s_values']} n={o['n_values']}, "
                     f"{o['probes_per_cell']} probes per cell")
    elif cfg.kind == "gravity":
        lines.append(f"plan: radial series on [{o['r_min_units']:.6g}, "
                     f"{o['r_max_units']:.6g}] grid units, "
                     f"{o['num_radii']} radii, variant={o['variant']}")
    elif cfg.kind == "evolve":
        lines.append(f"plan: {o['mode']} run, {o['steps']} steps of "
                     f"dt={o['dt']:.6g}, quantum={o['include_quantum']}, "
                     f"gravity={o['include_gravity']}")
    elif cfg.kind == "cosmo":
        lines.append(f"plan: coupling scalings over {len(o['rdot_values'])} "
                     f"cosmology samples")
    return "\n".join(lines)


def _run_verify(cfg: ExperimentConfig, out: Path, config_hash: str
                ) -> list[str]:
    o = cfg.options
    derived = derive_params(cfg.dpi)
    quad = QuadratureSpec(points_per_axis=o["gh_points"])
    grid = []
    worst = 0.0
    for beta in o["beta_values"]:
        for dmag in o["d_values"]:
            for alpha_s in o["alpha_s_values"]:
                chk = verify_insertion_identity(beta, dmag * _DIRECTION,
                                                alpha_s, quad)
                worst = max(worst, chk.rel_error)
                grid.append({"beta": beta, "d": dmag, "alpha_s": alpha_s,
                             "rel_error": chk.rel_error,
                             "converged": chk.converged})
    action = gaussian_heat_action_check(derived)
    payload = {
        "config_sha256": config_hash,
        "insertion_grid": grid,
        "max_rel_error": worst,
        "heat_action": action.as_dict(),
    }
    write_json(out / "verify.json", payload)
    return ["verify.json"]


def _run_compare(cfg: ExperimentConfig, out: Path, config_hash: str,
                 threads: int) -> list[str]:
    o = cfg.options
    spec = SweepSpec(t_values=o["t_values"], s_values=o["s_values"],
                     n_values=o["n_values"],
                     probes_per_cell=o["probes_per_cell"], seed=cfg.seed,
                     orders=o["orders"], cloud_spread=o["cloud_spread"],
                     include_integral=o["include_integral"])
    report = run_equivalence_sweep(spec, cfg.dpi, threads=threads)
    report.to_csv(out / "sweep_cells.csv", config_hash)
    report.to_json(out / "sweep_summary.json", config_hash)
    return ["sweep_cells.csv", "sweep_summary.json"]


def _run_gravity(cfg: ExperimentConfig, out: Path, config_hash: str
                 ) -> list[str]:
    o = cfg.options
    derived = derive_params(cfg.dpi)
    unit = math.sqrt(derived.omega)
    r_min = o["r_min_units"] * unit
    r_max = o["r_max_units"] * unit
    radii = np.geomspace(r_min, r_max, o["num_radii"])
    shell = RadialShell(o["zeta"], o["xi_factor"] * r_min)
    variant = o["variant"]
    if variant == "pure":
        spec = RadialSeriesSpec(unit, radii, shell)
    elif variant == "ambient":
        spec = RadialSeriesSpec(unit, radii, shell,
                                prefactor_density=Uniform(o["rho0"]))
    else:
        model = Superposition([shell, Uniform(o["rho0"])])
        spec = RadialSeriesSpec(unit, radii, model)
    curve = radial_series_potential(spec, derived, cfg.dpi.u0)
    fit = fit_power_law(curve, r_min, r_max)

    with open(out / "tail.csv", "w", newline="") as fh:
        fh.write(f"# config_sha256={config_hash}\n")
        fh.write("r,u,fit_residual\n")
        for r, u, res in zip(curve.r, curve.u, fit.residuals):
            fh.write(f"{r!r},{u!r},{res!r}\n")

    payload = fit.as_dict()
    payload.update({"config_sha256": config_hash, "variant": variant,
                    "grid_unit": unit, "xi": o["xi_factor"] * r_min,
                    "excluded_terms": curve.excluded_terms})
    if abs(fit.exponent + 1.0) <= 0.1:
        coupling = effective_coupling(fit, cfg.constants)
        payload["effective_coupling"] = {"g_eff": coupling.g_eff,
                                         "attractive": coupling.attractive,
                                         "note": coupling.note}
    write_json(out / "fit.json", payload)
    return ["tail.csv", "fit.json"]


def _run_evolve(cfg: ExperimentConfig, out: Path, config_hash: str
                ) -> list[str]:
    o = cfg.options
    derived = derive_params(cfg.dpi)
    if o["mode"] == "kepler":
        d = o["separation"]
        g, m = cfg.constants.g_newton, cfg.constants.mass
        speed = math.sqrt(g * m / (2.0 * d))
        positions = [[d / 2, 0, 0], [-d / 2, 0, 0]]
        velocities = [[0, speed, 0], [0, -speed, 0]]
    else:
        positions = o["positions"]
        velocities = o["velocities"]
    traj, ledger = integrate_effective(
        positions, velocities, cfg.constants, cfg.dpi, derived,
        steps=o["steps"], dt=o["dt"],
        include_quantum=o["include_quantum"],
        include_gravity=o["include_gravity"])
    traj.to_csv(out / "trajectory.csv", config_hash)
    ledger.to_csv(out / "energy.csv", config_hash)
    artifacts = ["trajectory.csv", "energy.csv"]
    if "transform_file" in o:
        transform = TransformSpec.from_csv(o["transform_file"])
        rep = check_leibnitz_invariance(traj, transform, cfg.dpi, derived)
        write_json(out / "leibnitz.json", {
            "config_sha256": config_hash,
            "max_kinetic_gap_rel": rep.max_kinetic_gap_rel,
            "action_original": rep.action_original,
            "action_reparametrized": rep.action_reparametrized,
            "action_rel_change": rep.action_rel_change,
        })
        artifacts.append("leibnitz.json")
    return artifacts


def _run_cosmo(cfg: ExperimentConfig, out: Path, config_hash: str
               ) -> list[str]:
    o = cfg.options
    base = CosmologyState(o["radius0"], o["rdot_values"][0],
                          o["rho_values"][0])
    rows = []
    for rdot, rho in zip(o["rdot_values"], o["rho_values"]):
        state = CosmologyState(o["radius0"], rdot, rho)
        rows.append({
            "rdot": rdot,
            "rho_universe": rho,
            "hbar": hbar_scaling(state, base, o["hbar0"]),
            "g_newton": g_scaling(state, base, o["g0"]),
        })
    with open(out / "cosmo.csv", "w", newline="") as fh:
        fh.write(f"# config_sha256={config_hash}\n")
        fh.write("rdot,rho_universe,hbar,g_newton\n")
        for row in rows:
            fh.write(",".join(repr(row[k]) for k in
                              ("rdot", "rho_universe", "hbar", "g_newton"))
                     + "\n")
    write_json(out / "cosmo.json",
               {"config_sha256": config_hash, "samples": rows})
    return ["cosmo.csv", "cosmo.json"]


_RUNNERS = {
    "verify": lambda cfg, out, h, threads: _run_verify(cfg, out, h),
    "compare": _run_compare,
    "gravity": lambda cfg, out, h, threads: _run_gravity(cfg, out, h),
    "evolve": lambda cfg, out, h, threads: _run_evolve(cfg, out, h),
    "cosmo": lambda cfg, out, h, threads: _run_cosmo(cfg, out, h),
}


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1
                   ) -> list[str]:
    """Execute the configured experiment; returns artifact names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_hash = sha256_bytes(cfg.source_bytes)
    artifacts = _RUNNERS[cfg.kind](cfg, out, config_hash, threads)
    derived = derive_params(cfg.dpi)
    write_manifest(out, config_hash, cfg.source_path, derived.as_dict(),
                   artifacts)
    return artifacts + ["manifest.json"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dpilab",
        description="run one configured experiment and emit CSV/JSON artifacts")
    parser.add_argument("config", help="experiment config file (INI format)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for probe sweeps")
    parser.add_argument("--dry-run", action="store_true",
                        help="print the plan without executing")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error category={exc.category} reason={exc}", file=sys.stderr)
        return 2 if exc.category == "parse" else 3

    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.kind == "compare" and cfg.seed is None:
        print("error category=validation reason=compare needs a seed",
              file=sys.stderr)
        return 3

    if args.dry_run:
        print(describe(cfg))
        return 0

    out_dir = args.out or cfg.output_dir
    try:
        artifacts = run_experiment(cfg, out_dir, threads=args.threads)
    except (DpilabError, FloatingPointError) as exc:
        print(f"error category=numerical reason={exc}", file=sys.stderr)
        return 4
    print(f"wrote {len(artifacts)} artifact(s) to {out_dir}: "
          f"{', '.join(artifacts)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
