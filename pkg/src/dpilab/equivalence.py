"""Experiment harness quantifying how well the four potential routes agree.

The agreement regime is parameterised by the probe separation multiple
s = (nearest particle distance)/alpha_s and the range ratio
t = alpha_s/alpha_l.  A sweep samples dilute particle clouds, places probes
on spheres of radius s*alpha_s around randomly chosen particles, records
every evaluator, and aggregates per-cell medians of the pairwise relative
gaps.  Medians, not means: the tails near density minima are heavy.

Monotonicity is judged along the joint direction of increasing s and
decreasing t, stepping one grid cell in both knobs at once; that is the
direction that moves deeper into the validity regime.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .density import DensityModel, ParticleConfiguration, sqrt_laplacian_stack
from .errors import ParameterRangeError
from .params import DerivedParams, DpiParams, derive_params
from .potentials import PotentialProbe, make_potential_probe
from .quadrature import (
    GH_METHOD,
    MC_METHOD,
    QuadratureSpec,
    gh_integrate_3d,
)

__all__ = [
    "InsertionCheck",
    "SweepSpec",
    "CellStats",
    "SweepReport",
    "verify_insertion_identity",
    "run_equivalence_sweep",
    "correction_magnitude",
    "CorrectionReport",
]


@dataclass(frozen=True)
class InsertionCheck:
    value: float
    reference: float
    rel_error: float
    error_estimate: float
    converged: bool
    method: str


def verify_insertion_identity(beta: float, d_vector, alpha_s: float,
                              quadrature: QuadratureSpec | None = None
                              ) -> InsertionCheck:
    """Check that int d3y exp(-|y + beta*d|^2/alpha_s^2) = (pi alpha_s^2)^(3/2).

    The rule is centered at the origin, not at the shifted mode, so the
    check genuinely exercises quadrature convergence rather than being exact
    by construction.
    """
    if alpha_s <= 0:
        raise ParameterRangeError(f"alpha_s must be positive, got {alpha_s}")
    quad = quadrature or QuadratureSpec(points_per_axis=64)
    d = np.asarray(d_vector, dtype=float)
    reference = (math.pi * alpha_s**2) ** 1.5

    if quad.method == MC_METHOD:
        rng = np.random.default_rng(quad.seed)
        y = rng.normal(0.0, alpha_s / math.sqrt(2.0), (quad.samples, 3))
        # integrand / envelope = exp(-(2 beta d . y + beta^2 d^2)/alpha_s^2)
        f = np.exp(-(2.0 * beta * y @ d + beta**2 * d @ d) / alpha_s**2)
        value = reference * float(f.mean())
        err = reference * float(f.std(ddof=1)) / math.sqrt(quad.samples)
        method = MC_METHOD
    else:
        shift = beta * d

        def integrand(p):
            z = p + shift
            return np.exp(-np.einsum("mi,mi->m", z, z) / alpha_s**2
                          + np.einsum("mi,mi->m", p, p) / alpha_s**2)

        res = gh_integrate_3d(integrand, np.zeros(3), alpha_s,
                              quad.points_per_axis)
        value = alpha_s**3 * res.value
        err = alpha_s**3 * res.error_estimate
        method = GH_METHOD

    rel = abs(value - reference) / reference
    return InsertionCheck(value=value, reference=reference, rel_error=rel,
                          error_estimate=err,
                          converged=err <= quad.tolerance * reference,
                          method=method)


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class SweepSpec:
    """Grid and sampling plan for an agreement sweep.

    cloud_spread scales the sampled cloud: the positions are isotropic
    normal with standard deviation cloud_spread * alpha_s * N^(1/3), dilute
    enough that probes at 10*alpha_s from their particle stay well separated
    from the rest.
    """

    t_values: tuple[float, ...] = (0.25, 0.1, 0.05)
    s_values: tuple[float, ...] = (2.0, 5.0, 10.0)
    n_values: tuple[int, ...] = (1, 16, 256)
    probes_per_cell: int = 32
    seed: int = 0
    orders: tuple[int, ...] = (1, 2)
    cloud_spread: float = 25.0
    include_integral: bool = False

    def __post_init__(self) -> None:
        if min(self.t_values) <= 0 or min(self.s_values) <= 0:
            raise ParameterRangeError("grid values must be positive")
        if max(self.t_values) > 0.5:
            raise ParameterRangeError("t = alpha_s/alpha_l cannot exceed 1/2")
        if min(self.n_values) < 1 or self.probes_per_cell < 1:
            raise ParameterRangeError("need at least one particle and probe")


@dataclass
class CellStats:
    n: int
    t: float
    s: float
    valid_probes: int
    degenerate_count: int
    conditioning_excluded: int
    median_direct_closed: float
    p90_direct_closed: float
    median_closed_series: float
    p90_closed_series: float
    median_series_step: float
    p90_series_step: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SweepReport:
    params: DpiParams
    spec: SweepSpec
    cells: list[CellStats]
    comparisons: list[dict]
    verdicts: dict

    def cell(self, n: int, t: float, s: float) -> CellStats:
        for c in self.cells:
            if c.n == n and c.t == t and c.s == s:
                return c
        raise KeyError(f"no cell (n={n}, t={t}, s={s})")

    def to_csv(self, path, config_hash: str | None = None) -> None:
        cols = ["n", "t", "s", "valid_probes", "degenerate_count",
                "conditioning_excluded",
                "median_direct_closed", "p90_direct_closed",
                "median_closed_series", "p90_closed_series",
                "median_series_step", "p90_series_step"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# u0={self.params.u0!r} alpha_s={self.params.alpha_s!r}"
                     f" seed={self.spec.seed}\n")
            if config_hash:
                fh.write(f"# config_sha256={config_hash}\n")
            fh.write(",".join(cols) + "\n")
            for c in self.cells:
                d = c.as_dict()
                fh.write(",".join(repr(d[k]) if isinstance(d[k], float)
                                  else str(d[k]) for k in cols) + "\n")

    def summary_dict(self) -> dict:
        return {
            "seed": self.spec.seed,
            "grid": {"t": list(self.spec.t_values),
                     "s": list(self.spec.s_values),
                     "n": list(self.spec.n_values)},
            "cells": [c.as_dict() for c in self.cells],
            "comparisons": self.comparisons,
            "verdicts": self.verdicts,
        }

    def to_json(self, path, config_hash: str | None = None) -> None:
        payload = self.summary_dict()
        if config_hash:
            payload["config_sha256"] = config_hash
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _sample_cell_probes(rng, positions: np.ndarray, s: float, alpha_s: float,
                        count: int) -> list[np.ndarray]:
    """Probe points at nearest-particle distance close to s*alpha_s:
    uniform directions on a sphere of that radius around a random particle,
    rejecting probes another particle spoils."""
    probes = []
    radius = s * alpha_s
    max_tries = 40 * count
    tries = 0
    n = len(positions)
    while len(probes) < count and tries < max_tries:
        tries += 1
        center = positions[rng.integers(n)]
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        x = center + radius * u
        nearest = np.min(np.linalg.norm(positions - x, axis=1))
        if abs(nearest - radius) <= 0.25 * radius:
            probes.append(x)
    return probes


def _median_p90(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.sort(np.asarray(values))
    return float(np.median(arr)), float(np.quantile(arr, 0.9))


def run_equivalence_sweep(spec: SweepSpec, params: DpiParams,
                          threads: int = 1) -> SweepReport:
    """Sample, probe and aggregate every grid cell; deterministic per seed."""
    cells_index = [(n, t, s)
                   for n in spec.n_values
                   for t in spec.t_values
                   for s in spec.s_values]
    master = np.random.SeedSequence(spec.seed)
    children = master.spawn(len(cells_index))

    def run_cell(args) -> CellStats:
        (n, t, s), seed_seq = args
        cell_params = DpiParams(u0=params.u0, alpha_s=params.alpha_s,
                                alpha_l=params.alpha_s / t)
        derived = derive_params(cell_params)
        rng = np.random.default_rng(seed_seq)
        spread = spec.cloud_spread * params.alpha_s * n ** (1.0 / 3.0)
        positions = rng.normal(0.0, spread, (n, 3))
        config = ParticleConfiguration(positions)
        probes = _sample_cell_probes(rng, positions, s, params.alpha_s,
                                     spec.probes_per_cell)
        kmax = max(spec.orders)
        k0 = spec.orders[0]
        floor = 1e-30 * abs(params.u0 * derived.prefactor_c)
        dc, cs, ss = [], [], []
        degenerate = 0
        excluded = 0
        for x in probes:
            probe = make_potential_probe(cell_params, derived, config, x,
                                         orders=(k0, kmax),
                                         include_integral=spec.include_integral)
            if probe.degenerate:
                degenerate += 1
                continue
            if abs(probe.u_closed) < floor:
                excluded += 1
                continue
            denom = abs(probe.u_closed)
            dc.append(abs(probe.u_direct - probe.u_closed) / denom)
            cs.append(abs(probe.u_closed - probe.u_series[k0]) / denom)
            if kmax > k0:
                ss.append(abs(probe.u_series[k0 + 1] - probe.u_series[k0])
                          / denom)
        med_dc, p90_dc = _median_p90(dc)
        med_cs, p90_cs = _median_p90(cs)
        med_ss, p90_ss = _median_p90(ss)
        return CellStats(n=n, t=t, s=s, valid_probes=len(dc),
                         degenerate_count=degenerate,
                         conditioning_excluded=excluded,
                         median_direct_closed=med_dc, p90_direct_closed=p90_dc,
                         median_closed_series=med_cs, p90_closed_series=p90_cs,
                         median_series_step=med_ss, p90_series_step=p90_ss)

    jobs = list(zip(cells_index, children))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(run_cell, jobs))   # ordered assembly
    else:
        cells = [run_cell(j) for j in jobs]

    comparisons, verdicts = _monotonicity_verdicts(spec, cells)
    return SweepReport(params=params, spec=spec, cells=cells,
                       comparisons=comparisons, verdicts=verdicts)


def _monotonicity_verdicts(spec: SweepSpec, cells: list[CellStats]):
    """Joint-direction comparisons: one step up in s and one step down in t
    must strictly decrease the median gap, for every N and both gap kinds."""
    by_key = {(c.n, c.t, c.s): c for c in cells}
    s_sorted = sorted(spec.s_values)
    t_sorted = sorted(spec.t_values, reverse=True)
    comparisons = []
    verdict = {"direct_closed": True, "closed_series": True}
    per_n: dict[str, dict] = {"direct_closed": {}, "closed_series": {}}
    for n in spec.n_values:
        ok_dc = True
        ok_cs = True
        for i in range(len(s_sorted) - 1):
            for j in range(len(t_sorted) - 1):
                a = by_key[(n, t_sorted[j], s_sorted[i])]
                b = by_key[(n, t_sorted[j + 1], s_sorted[i + 1])]
                cmp_dc = (math.isfinite(a.median_direct_closed)
                          and math.isfinite(b.median_direct_closed)
                          and b.median_direct_closed < a.median_direct_closed)
                cmp_cs = (math.isfinite(a.median_closed_series)
                          and math.isfinite(b.median_closed_series)
                          and b.median_closed_series < a.median_closed_series)
                comparisons.append({
                    "n": n,
                    "from": {"s": s_sorted[i], "t": t_sorted[j]},
                    "to": {"s": s_sorted[i + 1], "t": t_sorted[j + 1]},
                    "direct_closed": {"from": a.median_direct_closed,
                                      "to": b.median_direct_closed,
                                      "decreased": cmp_dc},
                    "closed_series": {"from": a.median_closed_series,
                                      "to": b.median_closed_series,
                                      "decreased": cmp_cs},
                })
                ok_dc &= cmp_dc
                ok_cs &= cmp_cs
        per_n["direct_closed"][f"n={n}"] = ok_dc
        per_n["closed_series"][f"n={n}"] = ok_cs
        verdict["direct_closed"] &= ok_dc
        verdict["closed_series"] &= ok_cs
    verdicts = {
        "all_direct_closed_decreasing": verdict["direct_closed"],
        "all_closed_series_decreasing": verdict["closed_series"],
        "per_n": per_n,
        "all_cells_finite": all(math.isfinite(c.median_direct_closed)
                                and math.isfinite(c.median_closed_series)
                                for c in cells),
    }
    return comparisons, verdicts


# ---------------------------------------------------------------------------
# correction size


@dataclass
class CorrectionReport:
    """Leading correction-to-quantum-potential size per probe.

    ratio = |omega^2 lap^2 sqrt(rho) / 2| / |omega lap sqrt(rho)|; probes
    with ratio > 1 are flagged untrustworthy for the truncated series, and
    0/0 probes (uniform density) are flagged undefined rather than zero.
    """

    ratios: np.ndarray
    untrustworthy: np.ndarray
    undefined: np.ndarray


def correction_magnitude(model: DensityModel, derived: DerivedParams,
                         probes) -> CorrectionReport:
    pts = np.atleast_2d(np.asarray(probes, dtype=float))
    ratios = np.empty(len(pts))
    undefined = np.zeros(len(pts), dtype=bool)
    for i, x in enumerate(pts):
        stack = sqrt_laplacian_stack(model, x, 2)
        num = abs(derived.omega**2 * stack[2] / 2.0)
        den = abs(derived.omega * stack[1])
        if den == 0.0:
            ratios[i] = math.nan
            undefined[i] = True
        else:
            ratios[i] = num / den
    untrustworthy = np.where(undefined, False, ratios > 1.0)
    return CorrectionReport(ratios=ratios, untrustworthy=untrustworthy,
                            undefined=undefined)
