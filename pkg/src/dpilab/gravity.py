"""Radial discretization of the smoothing series and the emergent 1/r tail.

Discretizing the radial direction with grid unit equal to sqrt(omega) makes
the omega^n/unit^(2n) factors collapse to one, and the iterated-Laplacian
chain relates the potential at radius r to the density sampled inward along

    U(r) = u0 (4 beta)^(-3/4) (pi/(1/(2 unit^2) + 1/gamma^2))^(3/4)
           * (1/sqrt(rho_at_probe(r)))
           * sum_{n=0}^{M/2-1} (1/n!) sqrt(rho((1 - 2n/M) r)),   M = r/unit.

For a structured density falling like (zeta*xi/r)^2, the inward samples pull
in the particle's fine structure and the sum behaves like
zeta*xi*S(M)/r with the series coefficient

    S(M) = sum_{n=0}^{M/2-1} 1/(n! (1 - 2n/M)).

Whether the probe-point density in the prefactor is the structured profile
itself or an ambient background is left to the experiment: with the
structured profile the 1/sqrt(rho(r)) ~ r factor cancels the tail, while an
ambient (uniform) background leaves the inverse-distance behaviour intact.
Both variants are runnable; the fit report records what was fitted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .density import DensityModel
from .errors import DomainError, ParameterRangeError
from .params import DerivedParams, PhysicalConstants

__all__ = [
    "RadialSeriesSpec",
    "RadialCurve",
    "TailFitReport",
    "EffectiveCoupling",
    "series_coefficient",
    "truncation_order",
    "radial_series_potential",
    "fit_power_law",
    "effective_coupling",
]


def truncation_order(r: float, grid_unit: float) -> int:
    """M(r) = r/grid_unit, rounded down to the nearest even integer >= 2."""
    if grid_unit <= 0:
        raise ParameterRangeError("grid unit must be positive")
    m = int(math.floor(r / grid_unit))
    m -= m % 2
    return max(m, 2)


def series_coefficient(M: int) -> float:
    """S(M) = sum_{n=0}^{M/2-1} 1/(n! (1 - 2n/M)) for even M >= 2.

    The upper limit keeps every denominator positive; S(2) = 1 exactly and
    S(M) decreases toward e as M grows (the weights approach 1 for the
    contributing n while the tail dies factorially).
    """
    if M < 2 or M % 2 != 0:
        raise ParameterRangeError(f"M must be an even integer >= 2, got {M}")
    terms = []
    inv_fact = 1.0
    for n in range(M // 2):
        if n > 0:
            inv_fact /= n
        terms.append(inv_fact / (1.0 - 2.0 * n / M))
    return math.fsum(terms)


@dataclass(frozen=True)
class RadialSeriesSpec:
    """Grid unit (default sqrt(omega)), radii, and the density fields.

    density feeds the inward samples; prefactor_density feeds the
    1/sqrt(rho) factor at the probe radius and defaults to the same model.
    The chain is only meaningful well outside the grid unit, so r >= 10*unit
    is enforced.
    """

    grid_unit: float
    r_values: np.ndarray
    density: DensityModel
    prefactor_density: DensityModel | None = None

    def __post_init__(self) -> None:
        r = np.asarray(self.r_values, dtype=float)
        if r.ndim != 1 or len(r) == 0:
            raise ParameterRangeError("r_values must be a 1-d list of radii")
        if self.grid_unit <= 0:
            raise ParameterRangeError("grid unit must be positive")
        if np.any(r < 10.0 * self.grid_unit):
            raise ParameterRangeError(
                f"radii must satisfy r >= 10*grid_unit = "
                f"{10 * self.grid_unit:.6g}")
        object.__setattr__(self, "r_values", r)

    @classmethod
    def from_derived(cls, derived: DerivedParams, r_values,
                     density: DensityModel,
                     prefactor_density: DensityModel | None = None
                     ) -> "RadialSeriesSpec":
        return cls(grid_unit=math.sqrt(derived.omega),
                   r_values=np.asarray(r_values, dtype=float),
                   density=density, prefactor_density=prefactor_density)


@dataclass
class RadialCurve:
    r: np.ndarray
    u: np.ndarray
    truncation: np.ndarray            # M used at each radius
    excluded_terms: int               # inward samples skipped at singularities


def radial_series_potential(spec: RadialSeriesSpec, derived: DerivedParams,
                            u0: float) -> RadialCurve:
    """Evaluate the discretized radial chain at every requested radius."""
    unit2 = spec.grid_unit**2
    prefactor = (u0 * (4.0 * derived.beta) ** -0.75
                 * (math.pi / (1.0 / (2.0 * unit2)
                               + 1.0 / derived.gamma**2)) ** 0.75)
    pref_density = spec.prefactor_density or spec.density
    r_arr = spec.r_values
    u_out = np.empty(len(r_arr))
    m_out = np.empty(len(r_arr), dtype=int)
    excluded = 0
    for i, r in enumerate(r_arr):
        M = truncation_order(float(r), spec.grid_unit)
        m_out[i] = M
        terms = []
        inv_fact = 1.0
        for n in range(M // 2):
            if n > 0:
                inv_fact /= n
            rn = (1.0 - 2.0 * n / M) * r
            if rn <= 0.0:
                excluded += 1
                continue
            point = np.array([rn, 0.0, 0.0])
            try:
                terms.append(inv_fact
                             * math.sqrt(float(spec.density.rho(point))))
            except DomainError:
                excluded += 1
        probe = np.array([float(r), 0.0, 0.0])
        sqrt_rho_probe = math.sqrt(float(pref_density.rho(probe)))
        u_out[i] = prefactor * math.fsum(terms) / sqrt_rho_probe
    return RadialCurve(r=r_arr.copy(), u=u_out, truncation=m_out,
                       excluded_terms=excluded)


@dataclass
class TailFitReport:
    exponent: float
    prefactor: float
    r_squared: float
    residuals: np.ndarray
    r_min: float
    r_max: float
    n_points: int

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "r_squared": self.r_squared,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "n_points": self.n_points,
            "max_abs_residual": float(np.max(np.abs(self.residuals))),
        }

    def to_json(self, path, extra: dict | None = None) -> None:
        payload = self.as_dict()
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def fit_power_law(curve: RadialCurve, r_min: float,
                  r_max: float) -> TailFitReport:
    """Least squares of log|U| on log r over [r_min, r_max].

    Requires at least 5 points and a single sign of U across the window; a
    sign change means the curve is not a power law there and the fit is
    refused rather than silently fitted to |U|.
    """
    mask = (curve.r >= r_min) & (curve.r <= r_max)
    r = curve.r[mask]
    u = curve.u[mask]
    if len(r) < 5:
        raise ParameterRangeError(
            f"need >= 5 radii in [{r_min:.6g}, {r_max:.6g}], got {len(r)}")
    if np.any(u == 0.0) or (np.any(u > 0) and np.any(u < 0)):
        raise ParameterRangeError(
            "potential changes sign (or vanishes) inside the fit window; "
            "power-law fit refused")
    x = np.log(r)
    y = np.log(np.abs(u))
    coeffs = np.polynomial.polynomial.polyfit(x, y, 1)
    yhat = np.polynomial.polynomial.polyval(x, coeffs)
    residuals = y - yhat
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    sign = 1.0 if u[0] > 0 else -1.0
    return TailFitReport(exponent=float(coeffs[1]),
                         prefactor=sign * math.exp(float(coeffs[0])),
                         r_squared=r2, residuals=residuals,
                         r_min=float(r.min()), r_max=float(r.max()),
                         n_points=len(r))


@dataclass(frozen=True)
class EffectiveCoupling:
    g_eff: float
    attractive: bool
    note: str


def effective_coupling(fit: TailFitReport, constants: PhysicalConstants,
                       mass: float | None = None) -> EffectiveCoupling:
    """Map a fitted A/r tail onto the pairwise -G m / r coupling.

    Only meaningful when the exponent is close to -1; the sign of the
    amplitude is reported, never normalised away.
    """
    if abs(fit.exponent + 1.0) > 0.1:
        raise ParameterRangeError(
            f"fitted exponent {fit.exponent:.4f} is not within 0.1 of -1; "
            f"no inverse-distance coupling to extract")
    m = mass if mass is not None else constants.mass
    g_eff = abs(fit.prefactor) / m
    attractive = fit.prefactor < 0
    note = ("attractive inverse-distance tail" if attractive else
            "repulsive under this interaction-strength convention")
    return EffectiveCoupling(g_eff=g_eff, attractive=attractive, note=note)
