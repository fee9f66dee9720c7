"""Particle configurations and evaluatable density fields.

The regularized point kernel is the normalized Gaussian

    delta_eps(x - a) = (pi eps^2)^(-3/2) exp(-|x - a|^2 / eps^2)

which integrates to one, and an ensemble of particles at a_1..a_n carries
the density rho(x) = sum_k delta_eps(x - a_k).  Besides the mixture this
module provides a uniform background, a structured radial profile

    rho(r) = zeta^2 (1 - exp(-xi/r))^2     (r > 0)

and superpositions, each with analytic first and second derivatives.
Analytic derivatives are the primary path everywhere; finite differences
appear only as test oracles, because the experiments probe Gaussian tails
where differencing is ill-conditioned.

Beyond the Laplacian, the smoothing-series evaluators need iterated
Laplacians of sqrt(rho).  Three exact routes cover the models:

  * polynomial * Gaussian closure for a single kernel (the Laplacian maps
    P(u) e^(-a u), u = r^2, to another such form),
  * a radial route for profiles with known radial derivatives, using
    lap f = f'' + 2 f'/r and the square-root derivative recurrence
    obtained by differentiating f^2 = rho,
  * the composition formulas through fourth order for arbitrary mixtures.

A grid-based stencil fallback (spacing eps/4, second-order stencils)
covers the remaining combinations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapabilityError,
    DegenerateDensityError,
    DomainError,
    ParameterRangeError,
    UnsupportedSamplerError,
)

__all__ = [
    "ParticleConfiguration",
    "MultiKindConfiguration",
    "DensityModel",
    "GaussianMixture",
    "Uniform",
    "RadialShell",
    "Superposition",
    "ProductDensity",
    "density_at",
    "sqrt_density",
    "sqrt_density_laplacian",
    "sqrt_laplacian_stack",
    "sample_configuration",
    "sqrt_sum_vs_sum_sqrt_gap",
]

# quantities divided by rho are flagged once rho falls below this fraction of
# the model's reference peak: small densities need caution, not silent output
FLOOR_FRACTION = 1e-30


def _as_points(x) -> tuple[np.ndarray, bool]:
    """Normalise x to shape (m, 3); report whether input was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (3,):
            raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected points of shape (m, 3), got {arr.shape}")
    return arr, False


def _unwrap(values: np.ndarray, single: bool):
    return values[0] if single else values


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class ParticleConfiguration:
    """Positions a_i of the ensemble, with optional per-particle kind labels."""

    positions: np.ndarray
    kinds: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.size == 0:
            pos = pos.reshape(0, 3)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ParameterRangeError(
                f"positions must have shape (n, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ParameterRangeError("particle coordinates must be finite")
        object.__setattr__(self, "positions", pos)
        if self.kinds is not None:
            kinds = tuple(self.kinds)
            if len(kinds) != len(pos):
                raise ParameterRangeError(
                    f"{len(kinds)} kind labels for {len(pos)} particles")
            object.__setattr__(self, "kinds", kinds)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def translated(self, b) -> "ParticleConfiguration":
        return ParticleConfiguration(self.positions + np.asarray(b, float),
                                     self.kinds)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "x", "y", "z"])
            for i, p in enumerate(self.positions):
                kind = self.kinds[i] if self.kinds is not None else ""
                writer.writerow([kind, repr(float(p[0])), repr(float(p[1])),
                                 repr(float(p[2]))])

    @classmethod
    def from_csv(cls, path) -> "ParticleConfiguration":
        rows = []
        kinds = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["kind", "x", "y", "z"]:
                raise ParameterRangeError(
                    f"unexpected configuration CSV header: {header}")
            for row in reader:
                kinds.append(row[0])
                rows.append([float(row[1]), float(row[2]), float(row[3])])
        pos = np.asarray(rows, dtype=float).reshape(-1, 3)
        use_kinds = tuple(kinds) if any(k != "" for k in kinds) else None
        return cls(pos, use_kinds)


@dataclass(frozen=True)
class MultiKindConfiguration:
    """m particle kinds with the same count N per kind; shape (m, N, 3)."""

    positions_by_kind: np.ndarray
    kind_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions_by_kind, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 3 or pos.shape[0] < 1:
            raise ParameterRangeError(
                f"positions_by_kind must have shape (m, N, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ParameterRangeError("particle coordinates must be finite")
        object.__setattr__(self, "positions_by_kind", pos)

    @property
    def num_kinds(self) -> int:
        return self.positions_by_kind.shape[0]

    @property
    def count_per_kind(self) -> int:
        return self.positions_by_kind.shape[1]

    @classmethod
    def from_configuration(cls, config: ParticleConfiguration
                           ) -> "MultiKindConfiguration":
        if config.kinds is None:
            return cls(config.positions[None, :, :])
        labels = list(dict.fromkeys(config.kinds))
        groups = [config.positions[[i for i, k in enumerate(config.kinds)
                                    if k == lab]] for lab in labels]
        counts = {len(g) for g in groups}
        if len(counts) != 1:
            raise ParameterRangeError(
                f"every kind needs the same particle count, got "
                f"{[len(g) for g in groups]} for kinds {labels}")
        return cls(np.stack(groups), tuple(labels))


# ---------------------------------------------------------------------------
# density models


class DensityModel:
    """Evaluatable density rho(x) with analytic derivatives.

    All evaluators accept a single 3-vector or an (m, 3) batch.
    Models are immutable after construction and safe to share.
    """

    def rho(self, x):
        raise NotImplementedError

    def grad_rho(self, x):
        raise NotImplementedError

    def lap_rho(self, x):
        raise NotImplementedError

    # fourth-order bundle, needed for the bilaplacian of sqrt(rho)
    def hessian_rho(self, x):
        raise CapabilityError(f"{type(self).__name__} has no analytic Hessian")

    def grad_lap_rho(self, x):
        raise CapabilityError(
            f"{type(self).__name__} has no analytic gradient of the Laplacian")

    def bilap_rho(self, x):
        raise CapabilityError(
            f"{type(self).__name__} has no analytic bilaplacian")

    def floor_reference(self) -> float:
        """Peak density scale defining the degeneracy floor."""
        raise NotImplementedError

    def feature_scale(self) -> float:
        """Smallest length scale on which the density varies."""
        raise NotImplementedError

    # optional exact high-order routes -------------------------------------
    def radial_center(self):
        """Center about which the density is radial, or None."""
        return None

    def rho_radial_derivs(self, r: float, order: int):
        """[rho, rho', ..., rho^(order)](r) for radial models, else None."""
        return None

    def sqrt_radial_derivs(self, r: float, order: int):
        """Radial derivatives of sqrt(rho) when available directly."""
        return None


class GaussianMixture(DensityModel):
    """Sum of normalized Gaussian kernels, one per particle position."""

    def __init__(self, configuration, epsilon: float):
        if epsilon <= 0 or not math.isfinite(epsilon):
            raise ParameterRangeError(f"kernel width must be positive, got {epsilon}")
        if isinstance(configuration, ParticleConfiguration):
            positions = configuration.positions
        else:
            positions = np.asarray(configuration, dtype=float).reshape(-1, 3)
        if positions.shape[0] == 0:
            raise ParameterRangeError("mixture needs at least one kernel")
        self.positions = positions
        self.epsilon = float(epsilon)
        self._norm = (math.pi * epsilon**2) ** -1.5

    def _phi(self, pts):
        d = pts[:, None, :] - self.positions[None, :, :]
        u = np.einsum("mki,mki->mk", d, d)
        return d, u, self._norm * np.exp(-u / self.epsilon**2)

    def rho(self, x):
        pts, single = _as_points(x)
        _, _, phi = self._phi(pts)
        return _unwrap(phi.sum(axis=1), single)

    def grad_rho(self, x):
        pts, single = _as_points(x)
        d, _, phi = self._phi(pts)
        g = -2.0 / self.epsilon**2 * np.einsum("mk,mki->mi", phi, d)
        return _unwrap(g, single)

    def lap_rho(self, x):
        pts, single = _as_points(x)
        _, u, phi = self._phi(pts)
        e2 = self.epsilon**2
        val = np.einsum("mk,mk->m", 4.0 * u / e2**2 - 6.0 / e2, phi)
        return _unwrap(val, single)

    def hessian_rho(self, x):
        pts, single = _as_points(x)
        d, _, phi = self._phi(pts)
        e2 = self.epsilon**2
        outer = np.einsum("mk,mki,mkj->mij", phi, d, d) * (4.0 / e2**2)
        trace = phi.sum(axis=1) * (2.0 / e2)
        outer -= trace[:, None, None] * np.eye(3)[None, :, :]
        return _unwrap(outer, single)

    def grad_lap_rho(self, x):
        pts, single = _as_points(x)
        d, u, phi = self._phi(pts)
        e2 = self.epsilon**2
        coef = (20.0 / e2**2 - 8.0 * u / e2**3) * phi
        return _unwrap(np.einsum("mk,mki->mi", coef, d), single)

    def bilap_rho(self, x):
        pts, single = _as_points(x)
        _, u, phi = self._phi(pts)
        e2 = self.epsilon**2
        coef = 16.0 * u**2 / e2**4 - 80.0 * u / e2**3 + 60.0 / e2**2
        return _unwrap(np.einsum("mk,mk->m", coef, phi), single)

    def floor_reference(self) -> float:
        return self._norm

    def feature_scale(self) -> float:
        return self.epsilon

    def translated(self, b) -> "GaussianMixture":
        return GaussianMixture(self.positions + np.asarray(b, float),
                               self.epsilon)

    def radial_center(self):
        if self.positions.shape[0] == 1:
            return self.positions[0]
        return None

    def rho_radial_derivs(self, r: float, order: int):
        if self.positions.shape[0] != 1:
            return None
        # rho(r) = norm * exp(-r^2/eps^2): p_(k+1)(r) = p_k' - (2 r / eps^2) p_k
        return _gaussian_radial_derivs(self._norm, 1.0 / self.epsilon**2,
                                       r, order)

    def sqrt_laplacian_stack_exact(self, x, order: int):
        if self.positions.shape[0] != 1:
            return None
        # sqrt(rho) = norm^(1/2) exp(-u / (2 eps^2)), u = r^2: closed under lap
        d = np.asarray(x, float) - self.positions[0]
        u = float(d @ d)
        return _poly_gauss_laplacian_stack(
            math.sqrt(self._norm), 0.5 / self.epsilon**2, u, order)


class Uniform(DensityModel):
    """Constant background density."""

    def __init__(self, rho0: float):
        if rho0 < 0 or not math.isfinite(rho0):
            raise ParameterRangeError(f"uniform density must be >= 0, got {rho0}")
        self.rho0 = float(rho0)

    def rho(self, x):
        pts, single = _as_points(x)
        return _unwrap(np.full(len(pts), self.rho0), single)

    def grad_rho(self, x):
        pts, single = _as_points(x)
        return _unwrap(np.zeros((len(pts), 3)), single)

    def lap_rho(self, x):
        pts, single = _as_points(x)
        return _unwrap(np.zeros(len(pts)), single)

    def hessian_rho(self, x):
        pts, single = _as_points(x)
        return _unwrap(np.zeros((len(pts), 3, 3)), single)

    grad_lap_rho = grad_rho
    bilap_rho = lap_rho

    def floor_reference(self) -> float:
        return self.rho0 if self.rho0 > 0 else 1.0

    def feature_scale(self) -> float:
        return math.inf

    def translated(self, b) -> "Uniform":
        return self

    def radial_center(self):
        return np.zeros(3)

    def rho_radial_derivs(self, r: float, order: int):
        out = np.zeros(order + 1)
        out[0] = self.rho0
        return out

    def sqrt_radial_derivs(self, r: float, order: int):
        out = np.zeros(order + 1)
        out[0] = math.sqrt(self.rho0)
        return out

    def sqrt_laplacian_stack_exact(self, x, order: int):
        out = np.zeros(order + 1)
        out[0] = math.sqrt(self.rho0)
        return out


class RadialShell(DensityModel):
    """Structured radial profile rho(r) = zeta^2 (1 - exp(-xi/r))^2 about the
    origin.  Sharp for small xi; defined for r > 0 only."""

    def __init__(self, zeta: float, xi: float):
        if zeta <= 0 or xi <= 0:
            raise ParameterRangeError(
                f"shell parameters must be positive, got zeta={zeta}, xi={xi}")
        self.zeta = float(zeta)
        self.xi = float(xi)

    def _radii(self, pts):
        r = np.linalg.norm(pts, axis=1)
        if np.any(r == 0.0):
            raise DomainError("shell density undefined at r = 0 "
                              "(essential singularity of exp(-xi/r))")
        return r

    def sqrt_profile(self, r):
        return self.zeta * (1.0 - np.exp(-self.xi / r))

    def rho(self, x):
        pts, single = _as_points(x)
        return _unwrap(self.sqrt_profile(self._radii(pts)) ** 2, single)

    def _f_derivs(self, r: float, order: int) -> np.ndarray:
        # f = zeta (1 - E), E = exp(-xi v), v = 1/r.
        # d/dr [q(v) E] = v^2 (xi q(v) - q'(v)) E, so the v-polynomial closes.
        pol = np.polynomial.polynomial
        v = 1.0 / r
        E = math.exp(-self.xi * v)
        q = np.array([1.0])
        out = np.empty(order + 1)
        out[0] = self.zeta * (1.0 - E)
        for k in range(1, order + 1):
            dq = pol.polyder(q) if len(q) > 1 else np.zeros(1)
            base = pol.polysub(self.xi * q, dq)
            q = np.concatenate([[0.0, 0.0], base])  # multiply by v^2
            out[k] = -self.zeta * pol.polyval(v, q) * E
        return out

    def grad_rho(self, x):
        pts, single = _as_points(x)
        r = self._radii(pts)
        E = np.exp(-self.xi / r)
        # rho' = 2 f f' with f = zeta (1 - E), f' = -zeta xi E / r^2
        rho_p = -2.0 * self.zeta**2 * (1.0 - E) * E * self.xi / r**2
        return _unwrap(rho_p[:, None] * pts / r[:, None], single)

    def lap_rho(self, x):
        pts, single = _as_points(x)
        r = self._radii(pts)
        out = np.empty(len(r))
        for i, ri in enumerate(r):
            f = self._f_derivs(float(ri), 2)
            rho_p = 2.0 * f[0] * f[1]
            rho_pp = 2.0 * (f[1] ** 2 + f[0] * f[2])
            out[i] = rho_pp + 2.0 * rho_p / ri
        return _unwrap(out, single)

    def floor_reference(self) -> float:
        return self.zeta**2

    def feature_scale(self) -> float:
        return self.xi

    def radial_center(self):
        return np.zeros(3)

    def sqrt_radial_derivs(self, r: float, order: int):
        if r <= 0:
            raise DomainError("shell density undefined at r <= 0")
        return self._f_derivs(float(r), order)

    def rho_radial_derivs(self, r: float, order: int):
        f = self.sqrt_radial_derivs(r, order)
        out = np.empty(order + 1)
        for k in range(order + 1):
            out[k] = math.fsum(math.comb(k, j) * f[j] * f[k - j]
                               for j in range(k + 1))
        return out


class Superposition(DensityModel):
    """Sum of component densities (e.g. structured particle plus uniform
    background).  rho and its derivatives are the component sums."""

    def __init__(self, components):
        comps = list(components)
        if not comps:
            raise ParameterRangeError("superposition needs components")
        self.components = comps

    def rho(self, x):
        return sum(c.rho(x) for c in self.components)

    def grad_rho(self, x):
        return sum(c.grad_rho(x) for c in self.components)

    def lap_rho(self, x):
        return sum(c.lap_rho(x) for c in self.components)

    def hessian_rho(self, x):
        return sum(c.hessian_rho(x) for c in self.components)

    def grad_lap_rho(self, x):
        return sum(c.grad_lap_rho(x) for c in self.components)

    def bilap_rho(self, x):
        return sum(c.bilap_rho(x) for c in self.components)

    def floor_reference(self) -> float:
        return sum(c.floor_reference() for c in self.components)

    def feature_scale(self) -> float:
        return min(c.feature_scale() for c in self.components)

    def radial_center(self):
        centers = []
        for c in self.components:
            rc = c.radial_center()
            if rc is None:
                return None
            if not isinstance(c, Uniform):  # uniform is radial about anywhere
                centers.append(rc)
        if not centers:
            return np.zeros(3)
        first = centers[0]
        for other in centers[1:]:
            if not np.allclose(first, other, atol=0.0):
                return None
        return first

    def rho_radial_derivs(self, r: float, order: int):
        if self.radial_center() is None:
            return None
        parts = [c.rho_radial_derivs(r, order) for c in self.components]
        if any(p is None for p in parts):
            return None
        return np.sum(parts, axis=0)


class ProductDensity:
    """Joint configuration-space density factorising over particle kinds:
    rho(x_1 .. x_m) = prod_l rho_l(x_l)."""

    def __init__(self, components):
        comps = list(components)
        if not comps:
            raise ParameterRangeError("product density needs components")
        self.components = comps

    @property
    def num_kinds(self) -> int:
        return len(self.components)

    def rho(self, points) -> float:
        pts = np.asarray(points, dtype=float).reshape(len(self.components), 3)
        return float(np.prod([c.rho(p) for c, p in zip(self.components, pts)]))

    def floor_reference(self) -> float:
        return float(np.prod([c.floor_reference() for c in self.components]))


# ---------------------------------------------------------------------------
# kernels of the exact high-order routes


def _gaussian_radial_derivs(amplitude: float, a: float, r: float,
                            order: int) -> np.ndarray:
    """[g, g', .., g^(order)](r) for g(r) = amplitude * exp(-a r^2)."""
    # g^(k) = p_k(r) g with p_(k+1) = p_k' - 2 a r p_k
    p = np.zeros(order + 2)
    p[0] = 1.0
    g = amplitude * math.exp(-a * r * r)
    out = np.empty(order + 1)
    out[0] = g
    for k in range(1, order + 1):
        dp = np.append(np.polynomial.polynomial.polyder(p), [0.0, 0.0])
        shifted = np.zeros_like(p)
        shifted[1:] = p[:-1]
        p = (dp[:len(p)] - 2.0 * a * shifted)
        out[k] = np.polynomial.polynomial.polyval(r, p) * g
    return out


def _poly_gauss_laplacian_stack(amplitude: float, a: float, u: float,
                                order: int) -> np.ndarray:
    """[h, lap h, .., lap^order h](x) for h = amplitude * exp(-a u), u = r^2.

    In three dimensions lap[P(u) e^(-a u)] = [4 u (P'' - 2 a P' + a^2 P)
    + 6 (P' - a P)] e^(-a u), so the polynomial part closes on itself.
    """
    pol = np.polynomial.polynomial
    P = np.array([amplitude])
    expo = math.exp(-a * u)
    out = np.empty(order + 1)
    for n in range(order + 1):
        out[n] = pol.polyval(u, P) * expo
        dP = pol.polyder(P) if len(P) > 1 else np.zeros(1)
        d2P = pol.polyder(P, 2) if len(P) > 2 else np.zeros(1)
        inner = pol.polyadd(pol.polyadd(d2P, -2.0 * a * dP), a * a * P)
        P = pol.polyadd(pol.polymulx(4.0 * inner), 6.0 * pol.polyadd(dP, -a * P))
    return out


def _sqrt_derivs_from_rho_derivs(g: np.ndarray) -> np.ndarray:
    """Radial derivatives of f = sqrt(g) from those of g.

    Differentiating f^2 = g n times gives
    sum_k C(n,k) f^(k) f^(n-k) = g^(n), solved for f^(n).
    """
    if g[0] <= 0:
        raise DegenerateDensityError("sqrt recurrence needs positive density")
    n = len(g)
    f = np.empty(n)
    f[0] = math.sqrt(g[0])
    for m in range(1, n):
        acc = math.fsum(math.comb(m, k) * f[k] * f[m - k]
                        for k in range(1, m))
        f[m] = (g[m] - acc) / (2.0 * f[0])
    return f


def _radial_laplacian_stack(f_derivs: np.ndarray, r: float,
                            order: int) -> np.ndarray:
    """[h, lap h, .., lap^order h](r) from radial derivatives of h.

    For radial h in three dimensions lap h = h'' + 2 h'/r; each application
    consumes two derivative orders.
    """
    d = np.asarray(f_derivs, dtype=float)
    if len(d) < 2 * order + 1:
        raise CapabilityError(
            f"need {2 * order + 1} radial derivatives, got {len(d)}")
    out = np.empty(order + 1)
    out[0] = d[0]
    for n in range(1, order + 1):
        m = len(d) - 2
        nxt = np.empty(m)
        for j in range(m):
            acc = d[j + 2]
            for i in range(j + 1):
                acc += (2.0 * math.comb(j, i) * d[i + 1]
                        * ((-1.0) ** (j - i)) * math.factorial(j - i)
                        / r ** (j - i + 1))
            nxt[j] = acc
        d = nxt
        out[n] = d[0]
    return out


def _grid_laplacian_stack(fn, x, order: int, h: float) -> np.ndarray:
    """Stencil fallback: iterated 7-point Laplacians on a cube around x."""
    if order > 8:
        raise CapabilityError(
            f"grid fallback capped at order 8, requested {order}")
    n = order
    axis = np.arange(-n, n + 1) * h
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3) + np.asarray(x, float)
    cube = np.asarray(fn(pts), dtype=float).reshape(2 * n + 1, 2 * n + 1,
                                                    2 * n + 1)
    out = np.empty(order + 1)
    out[0] = cube[n, n, n]
    for k in range(1, order + 1):
        lap = (cube[2:, 1:-1, 1:-1] + cube[:-2, 1:-1, 1:-1]
               + cube[1:-1, 2:, 1:-1] + cube[1:-1, :-2, 1:-1]
               + cube[1:-1, 1:-1, 2:] + cube[1:-1, 1:-1, :-2]
               - 6.0 * cube[1:-1, 1:-1, 1:-1]) / h**2
        cube = lap
        c = cube.shape[0] // 2
        out[k] = cube[c, c, c]
    return out


# ---------------------------------------------------------------------------
# evaluators


def density_at(model: DensityModel, x):
    """rho(x); nonnegative by construction of the models."""
    return model.rho(x)


def sqrt_density(model: DensityModel, x):
    return np.sqrt(model.rho(x))


def check_density_floor(model: DensityModel, x) -> None:
    """Raise DegenerateDensityError where rho is below the floor."""
    rho = np.atleast_1d(model.rho(x))
    floor = FLOOR_FRACTION * model.floor_reference()
    if np.any(rho < floor):
        bad = int(np.sum(rho < floor))
        raise DegenerateDensityError(
            f"density below floor ({floor:.3e}) at {bad} probe(s); "
            f"1/rho quantities are unreliable there")


def sqrt_density_laplacian(model: DensityModel, x):
    """lap sqrt(rho) from analytic density derivatives.

    Uses lap sqrt(rho) = lap rho / (2 sqrt(rho)) - |grad rho|^2 / (4 rho^(3/2)).
    """
    check_density_floor(model, x)
    pts, single = _as_points(x)
    rho = np.atleast_1d(model.rho(pts))
    grad = np.atleast_2d(model.grad_rho(pts))
    lap = np.atleast_1d(model.lap_rho(pts))
    s = np.sqrt(rho)
    val = lap / (2.0 * s) - np.einsum("mi,mi->m", grad, grad) / (4.0 * rho * s)
    return _unwrap(val, single)


def _sqrt_bilaplacian_tensor(model: DensityModel, x) -> float:
    """lap^2 sqrt(rho) at a single point via composition through 4th order."""
    rho = float(model.rho(x))
    grad = np.asarray(model.grad_rho(x), dtype=float)
    lap = float(model.lap_rho(x))
    hess = np.asarray(model.hessian_rho(x), dtype=float)
    grad_lap = np.asarray(model.grad_lap_rho(x), dtype=float)
    bilap = float(model.bilap_rho(x))

    A = float(grad @ grad)
    B = float(grad @ hess @ grad)
    D = float(grad @ grad_lap)
    H2 = float(np.sum(hess * hess))

    g1 = 0.5 * rho ** -0.5
    g2 = -0.25 * rho ** -1.5
    g3 = 0.375 * rho ** -2.5
    g4 = -0.9375 * rho ** -3.5
    return (g4 * A * A + 2.0 * g3 * A * lap + 4.0 * g3 * B
            + g2 * (2.0 * H2 + lap * lap) + 4.0 * g2 * D + g1 * bilap)


def sqrt_laplacian_stack(model: DensityModel, x, order: int,
                         grid_step: float | None = None) -> np.ndarray:
    """[sqrt(rho), lap sqrt(rho), .., lap^order sqrt(rho)] at one point.

    Exact routes: polynomial closure for a single Gaussian kernel, the radial
    recurrences for radial models, composition formulas through order 2.
    Anything else falls back to iterated stencils with spacing grid_step
    (default: feature_scale()/4).
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    check_density_floor(model, x)
    x = np.asarray(x, dtype=float)
    if order == 0:
        return np.array([math.sqrt(float(model.rho(x)))])

    exact = getattr(model, "sqrt_laplacian_stack_exact", lambda *_: None)(x, order)
    if exact is not None:
        return exact

    center = model.radial_center()
    if center is not None:
        r = float(np.linalg.norm(x - center))
        if r > 0.0:
            f = model.sqrt_radial_derivs(r, 2 * order)
            if f is None:
                g = model.rho_radial_derivs(r, 2 * order)
                if g is not None:
                    f = _sqrt_derivs_from_rho_derivs(g)
            if f is not None:
                return _radial_laplacian_stack(f, r, order)

    if order <= 2:
        out = np.empty(order + 1)
        out[0] = math.sqrt(float(model.rho(x)))
        out[1] = float(sqrt_density_laplacian(model, x))
        if order == 2:
            out[2] = _sqrt_bilaplacian_tensor(model, x)
        return out

    h = grid_step
    if h is None:
        scale = model.feature_scale()
        if not math.isfinite(scale):
            scale = 1.0
        h = scale / 4.0
    return _grid_laplacian_stack(lambda p: np.sqrt(model.rho(p)), x, order, h)


# ---------------------------------------------------------------------------
# sampling and the square-root sum property


def sample_configuration(target: DensityModel, n: int,
                         seed: int) -> ParticleConfiguration:
    """n i.i.d. positions from the target density; deterministic per seed."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if not isinstance(target, GaussianMixture):
        raise UnsupportedSamplerError(
            f"no sampler for {type(target).__name__}; only Gaussian mixtures "
            f"are normalisable targets here")
    rng = np.random.default_rng(seed)
    if n == 0:
        return ParticleConfiguration(np.zeros((0, 3)))
    k = target.positions.shape[0]
    idx = rng.integers(0, k, size=n)
    # kernel exp(-r^2/eps^2) is an isotropic normal with std eps/sqrt(2)
    offsets = rng.normal(0.0, target.epsilon / math.sqrt(2.0), size=(n, 3))
    return ParticleConfiguration(target.positions[idx] + offsets)


def sqrt_sum_vs_sum_sqrt_gap(config: ParticleConfiguration, eps: float,
                             probes) -> np.ndarray:
    """Relative gap |sum_k sqrt(delta_k) - sqrt(sum_k delta_k)| / sqrt(sum).

    Exact zero for one kernel; for separated kernels the cross terms are
    exponentially small, while coincident kernels give the worst case
    sqrt(2) - 1 per doubling.
    """
    pts, single = _as_points(probes)
    d2 = np.sum((pts[:, None, :] - config.positions[None, :, :]) ** 2, axis=2)
    norm = (math.pi * eps**2) ** -1.5
    delta = norm * np.exp(-d2 / eps**2)
    sum_sqrt = np.sqrt(delta).sum(axis=1)
    sqrt_sum = np.sqrt(delta.sum(axis=1))
    floor = math.sqrt(FLOOR_FRACTION * norm)
    if np.any(sqrt_sum < floor):
        raise DegenerateDensityError("probe density below floor")
    gap = np.abs(sum_sqrt - sqrt_sum) / sqrt_sum
    return _unwrap(gap, single)
