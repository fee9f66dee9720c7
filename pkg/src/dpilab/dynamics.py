"""Relational kinetic term, product Lagrangian, effective dynamics and the
cosmological coupling scalings.

The kinetic term is intrinsically relational: only rates of change of
pairwise distances enter,

    K = ( sum_{i<j} [ d/dt |a_i - a_j| ]^2 )^(1/2),

with the time derivative taken by central differences of the stored
positions and projected on the pair direction.  The square root makes the
action integral invariant under monotone reparametrizations of time, and
rigid (even time-dependent) rotations and translations leave K unchanged up
to the O(dt^2) differencing error.

The effective equations of motion integrate the local approximate
Lagrangian: standard kinetic energy, the quantum potential of the
ensemble's own kernel density, and an attractive pairwise inverse-distance
term.  Forces are full analytic configuration gradients, so the integrator
conserves the energy implied by its own potential.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .density import GaussianMixture, ParticleConfiguration
from .errors import (
    CloseApproachError,
    CoincidentParticlesError,
    ParameterRangeError,
)
from .params import DerivedParams, DpiParams, PhysicalConstants
from .potentials import dpi_direct

__all__ = [
    "Trajectory",
    "CosmologyState",
    "TransformSpec",
    "EnergyLedger",
    "LeibnitzReport",
    "kinetic_pairwise",
    "potential_sum",
    "product_lagrangian",
    "shell_kinetic",
    "integrate_effective",
    "hbar_scaling",
    "g_scaling",
    "check_leibnitz_invariance",
    "quantum_force_and_energy",
]


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled positions (and optionally velocities) over time."""

    times: np.ndarray                 # (T,)
    positions: np.ndarray             # (T, N, 3)
    velocities: np.ndarray | None = None

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ParameterRangeError("need at least two time samples")
        steps = np.diff(t)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0],
                                                 rtol=1e-9, atol=0.0):
            raise ParameterRangeError("time samples must be uniform and increasing")
        if pos.ndim != 3 or pos.shape[0] != len(t) or pos.shape[2] != 3:
            raise ParameterRangeError(
                f"positions must have shape (T, N, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ParameterRangeError("positions must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", pos)
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float)
            if v.shape != pos.shape:
                raise ParameterRangeError("velocities must match positions")
            object.__setattr__(self, "velocities", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def num_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def num_samples(self) -> int:
        return self.positions.shape[0]

    def configuration(self, t_index: int) -> ParticleConfiguration:
        return ParticleConfiguration(self.positions[t_index])

    @classmethod
    def from_path(cls, path_fn, times) -> "Trajectory":
        """Sample a callable t -> (N, 3) positions on the given time grid."""
        t = np.asarray(times, dtype=float)
        pos = np.stack([np.asarray(path_fn(ti), dtype=float) for ti in t])
        return cls(t, pos)

    def to_csv(self, path, config_hash: str | None = None) -> None:
        v = self.velocities
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_sha256={config_hash}\n")
            fh.write("step,particle,x,y,z,vx,vy,vz\n")
            for k in range(self.num_samples):
                for i in range(self.num_particles):
                    row = [str(k), str(i)] + [repr(float(c))
                                              for c in self.positions[k, i]]
                    if v is not None:
                        row += [repr(float(c)) for c in v[k, i]]
                    else:
                        row += ["", "", ""]
                    fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class CosmologyState:
    """Expanding-shell toy universe: radius, expansion rate, mean density."""

    radius: float
    expansion_rate: float
    rho_universe: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ParameterRangeError("shell radius must be positive")
        if self.rho_universe <= 0:
            raise ParameterRangeError("universe density must be positive")


@dataclass(frozen=True)
class TransformSpec:
    """Sampled time-dependent rigid motion plus monotone time map.

    rotations: (T, 3, 3) orthogonal to 1e-12 per sample; translations (T, 3);
    time_map (T,) strictly increasing.
    """

    rotations: np.ndarray
    translations: np.ndarray
    time_map: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.rotations, dtype=float)
        B = np.asarray(self.translations, dtype=float)
        C = np.asarray(self.time_map, dtype=float)
        if A.ndim != 3 or A.shape[1:] != (3, 3) or B.shape != (A.shape[0], 3) \
                or C.shape != (A.shape[0],):
            raise ParameterRangeError("inconsistent transform sample shapes")
        defect = np.max(np.abs(np.einsum("kij,kil->kjl", A, A)
                               - np.eye(3)[None]))
        if defect > 1e-12:
            raise ParameterRangeError(
                f"rotation samples not orthogonal (defect {defect:.3e})")
        if np.any(np.diff(C) <= 0):
            raise ParameterRangeError("time map must be strictly increasing")
        object.__setattr__(self, "rotations", A)
        object.__setattr__(self, "translations", B)
        object.__setattr__(self, "time_map", C)

    @classmethod
    def from_functions(cls, times, rotation_fn=None, translation_fn=None,
                       time_fn=None) -> "TransformSpec":
        t = np.asarray(times, dtype=float)
        A = np.stack([(rotation_fn(ti) if rotation_fn else np.eye(3))
                      for ti in t])
        B = np.stack([(translation_fn(ti) if translation_fn else np.zeros(3))
                      for ti in t])
        C = np.array([(time_fn(ti) if time_fn else ti) for ti in t])
        return cls(A, B, C)

    @classmethod
    def from_csv(cls, path) -> "TransformSpec":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(r for r in fh if not r.startswith("#"))
            header = next(reader)
            expected = (["t"] + [f"a{i}{j}" for i in range(3) for j in range(3)]
                        + ["bx", "by", "bz", "c"])
            if [h.strip() for h in header] != expected:
                raise ParameterRangeError(
                    f"unexpected transform CSV header: {header}")
            for row in reader:
                rows.append([float(v) for v in row])
        arr = np.asarray(rows, dtype=float)
        A = arr[:, 1:10].reshape(-1, 3, 3)
        B = arr[:, 10:13]
        C = arr[:, 13]
        return cls(A, B, C)


# ---------------------------------------------------------------------------
# relational kinetic term


def _pair_rates(positions: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """d/dt |a_i - a_j| for all unordered pairs, from positions/velocities."""
    n = positions.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    rel = positions[iu] - positions[ju]
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist == 0.0):
        raise CoincidentParticlesError(
            "coincident particles: pairwise distance derivative undefined")
    relv = velocities[iu] - velocities[ju]
    return np.einsum("pi,pi->p", relv, rel) / dist


def kinetic_pairwise(traj: Trajectory, t_index: int) -> float:
    """Square root of the sum of squared pairwise distance rates.

    Rates use central-difference velocities projected on the pair direction;
    t_index must be interior.  At least two particles are required: a single
    particle has no relational motion.
    """
    if traj.num_particles < 2:
        raise ParameterRangeError("relational kinetic term needs >= 2 particles")
    if not (1 <= t_index <= traj.num_samples - 2):
        raise ParameterRangeError(
            f"t_index must be interior (1..{traj.num_samples - 2})")
    v = (traj.positions[t_index + 1] - traj.positions[t_index - 1]) \
        / (2.0 * traj.dt)
    rates = _pair_rates(traj.positions[t_index], v)
    return float(np.sqrt(np.sum(rates**2)))


def potential_sum(config: ParticleConfiguration, params: DpiParams,
                  derived: DerivedParams) -> float:
    """Sum of the direct potential over the particle locations themselves."""
    values = dpi_direct(params, derived, config, config.positions)
    return float(np.sum(np.atleast_1d(values)))


def product_lagrangian(traj: Trajectory, t_index: int, params: DpiParams,
                       derived: DerivedParams) -> float:
    """L = K * P at one interior sample."""
    k = kinetic_pairwise(traj, t_index)
    p = potential_sum(traj.configuration(t_index), params, derived)
    return k * p


def shell_kinetic(cosmo: CosmologyState, velocities,
                  const_factor: float) -> float:
    """Two-term shell expansion: const * [1 + sum v^2 / (30 Rdot^2)]."""
    if cosmo.expansion_rate == 0.0:
        raise ParameterRangeError(
            "shell kinetic expansion undefined for zero expansion rate")
    v = np.asarray(velocities, dtype=float).reshape(-1, 3)
    vsq = float(np.sum(v * v))
    return const_factor * (1.0 + vsq / (30.0 * cosmo.expansion_rate**2))


# ---------------------------------------------------------------------------
# effective dynamics


def quantum_force_and_energy(positions: np.ndarray, epsilon: float,
                             coupling: float) -> tuple[np.ndarray, float]:
    """Full configuration gradient of U = sum_j Q(a_j) for the ensemble's
    own kernel density, plus the energy itself.

    Q(x) = -coupling * F(x) with F = lap rho/(2 rho) - |grad rho|^2/(4 rho^2);
    the gradient includes both the probe-point motion and the dependence of
    the density field on every particle position, so the force is exactly
    -dU/da_i and the dynamics conserves energy.
    """
    a = np.asarray(positions, dtype=float)
    n = a.shape[0]
    e2 = epsilon**2
    norm = (math.pi * e2) ** -1.5
    d = a[:, None, :] - a[None, :, :]              # x_j - a_i -> [j, i, :]
    u = np.einsum("jik,jik->ji", d, d)
    phi = norm * np.exp(-u / e2)                   # [j, i]
    grad_phi = -2.0 / e2 * d * phi[:, :, None]     # [j, i, :]
    hess_phi = (4.0 / e2**2 * np.einsum("jik,jil->jikl", d, d)
                - 2.0 / e2 * np.eye(3)[None, None]) * phi[:, :, None, None]
    grad_lap_phi = (20.0 / e2**2 - 8.0 * u / e2**3)[:, :, None] * d \
        * phi[:, :, None]

    rho = phi.sum(axis=1)                          # [j]
    grad = grad_phi.sum(axis=1)                    # [j, :]
    lap = ((4.0 * u / e2**2 - 6.0 / e2) * phi).sum(axis=1)
    grad_lap = grad_lap_phi.sum(axis=1)            # [j, :]
    hess = hess_phi.sum(axis=1)                    # [j, 3, 3]
    A = np.einsum("jk,jk->j", grad, grad)

    F = lap / (2.0 * rho) - A / (4.0 * rho**2)
    energy = -coupling * float(np.sum(F))

    # probe-point gradient of F at x = a_j
    grad_F = (grad_lap / (2.0 * rho[:, None])
              - lap[:, None] * grad / (2.0 * rho[:, None] ** 2)
              - np.einsum("jkl,jl->jk", hess, grad) / (2.0 * rho[:, None] ** 2)
              + A[:, None] * grad / (2.0 * rho[:, None] ** 3))

    # dependence of the field at x_j on parameter a_i:
    #   d rho/d a_i = -grad_phi, d lap/d a_i = -grad_lap_phi,
    #   d|grad rho|^2/d a_i = -2 hess_phi . grad rho
    inv = 1.0 / rho
    dF = (-grad_lap_phi * (0.5 * inv)[:, None, None]
          + grad_phi * (0.5 * lap * inv**2)[:, None, None]
          + np.einsum("jikl,jl->jik", hess_phi, grad)
          * (0.5 * inv**2)[:, None, None]
          - grad_phi * (0.5 * A * inv**3)[:, None, None])

    # force_i = coupling * [ sum_j dF(x_j)/da_i + grad_F(a_i) ]
    force = coupling * (dF.sum(axis=0) + grad_F)
    return force, energy


def _gravity_force_and_energy(positions: np.ndarray, g: float,
                              mass: float) -> tuple[np.ndarray, float]:
    """Attractive pairwise inverse-distance term: V = -g m^2 sum_{i<j} 1/r."""
    n = positions.shape[0]
    force = np.zeros_like(positions)
    energy = 0.0
    for i in range(n):
        rel = positions[i] - positions[i + 1:]
        dist = np.linalg.norm(rel, axis=1)
        energy += float(np.sum(-g * mass**2 / dist))
        f = -g * mass**2 * rel / dist[:, None] ** 3
        force[i] += f.sum(axis=0)
        force[i + 1:] -= f
    return force, energy


@dataclass
class EnergyLedger:
    times: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.kinetic + self.potential

    def to_csv(self, path, config_hash: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_sha256={config_hash}\n")
            fh.write("t,kinetic,potential,total\n")
            for t, k, p in zip(self.times, self.kinetic, self.potential):
                fh.write(f"{t!r},{k!r},{p!r},{(k + p)!r}\n")


def integrate_effective(initial_positions, initial_velocities,
                        constants: PhysicalConstants, params: DpiParams,
                        derived: DerivedParams, steps: int, dt: float,
                        include_quantum: bool = True,
                        include_gravity: bool = True,
                        min_separation: float | None = None
                        ) -> tuple[Trajectory, EnergyLedger]:
    """Fixed-step velocity-Verlet integration of the effective dynamics.

    No gravitational softening: a close approach below min_separation
    (default 1e-6 of the initial minimum pair distance) aborts with a
    diagnostic instead of silently regularising the force.
    """
    if dt <= 0 or steps < 1:
        raise ParameterRangeError("need dt > 0 and steps >= 1")
    x = np.array(initial_positions, dtype=float).reshape(-1, 3)
    v = np.array(initial_velocities, dtype=float).reshape(-1, 3)
    if x.shape != v.shape:
        raise ParameterRangeError("positions and velocities must match")
    n = x.shape[0]
    mass = constants.mass

    if min_separation is None and n >= 2 and include_gravity:
        iu, ju = np.triu_indices(n, k=1)
        min_separation = 1e-6 * float(
            np.min(np.linalg.norm(x[iu] - x[ju], axis=1)))

    def forces(pos: np.ndarray) -> tuple[np.ndarray, float]:
        f = np.zeros_like(pos)
        pot = 0.0
        if include_quantum:
            fq, eq = quantum_force_and_energy(pos, derived.epsilon,
                                              constants.qp_coupling)
            f += fq
            pot += eq
        if include_gravity and n >= 2:
            fg, eg = _gravity_force_and_energy(pos, constants.g_newton, mass)
            f += fg
            pot += eg
        return f, pot

    def check_separation(pos: np.ndarray, step: int) -> None:
        if n < 2 or not include_gravity or min_separation is None:
            return
        iu, ju = np.triu_indices(n, k=1)
        dmin = float(np.min(np.linalg.norm(pos[iu] - pos[ju], axis=1)))
        if dmin < min_separation:
            raise CloseApproachError(
                f"step {step}: pair separation {dmin:.3e} fell below "
                f"{min_separation:.3e}; step rejected (no softening)")

    times = np.arange(steps + 1) * dt
    pos_out = np.empty((steps + 1, n, 3))
    vel_out = np.empty((steps + 1, n, 3))
    kin = np.empty(steps + 1)
    pot_arr = np.empty(steps + 1)

    f, pot = forces(x)
    pos_out[0], vel_out[0] = x, v
    kin[0] = 0.5 * mass * float(np.sum(v * v))
    pot_arr[0] = pot
    for k in range(steps):
        v_half = v + 0.5 * dt * f / mass
        x = x + dt * v_half
        check_separation(x, k + 1)
        f, pot = forces(x)
        v = v_half + 0.5 * dt * f / mass
        pos_out[k + 1], vel_out[k + 1] = x, v
        kin[k + 1] = 0.5 * mass * float(np.sum(v * v))
        pot_arr[k + 1] = pot
    traj = Trajectory(times, pos_out, vel_out)
    return traj, EnergyLedger(times=times, kinetic=kin, potential=pot_arr)


# ---------------------------------------------------------------------------
# cosmological scalings


def hbar_scaling(cosmo_t: CosmologyState, cosmo_t0: CosmologyState,
                 hbar_t0: float) -> float:
    """hbar(t) = hbar(t0) * Rdot(t)/Rdot(t0); exact algebraic map."""
    if cosmo_t0.expansion_rate == 0.0:
        raise ParameterRangeError("reference expansion rate must be nonzero")
    return hbar_t0 * cosmo_t.expansion_rate / cosmo_t0.expansion_rate


def g_scaling(cosmo_t: CosmologyState, cosmo_t0: CosmologyState,
              g_t0: float) -> float:
    """G(t) = G(t0) * sqrt(rho_universe(t0)/rho_universe(t))."""
    return g_t0 * math.sqrt(cosmo_t0.rho_universe / cosmo_t.rho_universe)


# ---------------------------------------------------------------------------
# invariance checks


@dataclass
class LeibnitzReport:
    kinetic_gaps: np.ndarray          # |K_transformed - K| per interior step
    max_kinetic_gap_rel: float
    action_original: float
    action_reparametrized: float
    action_rel_change: float


def _action(times: np.ndarray, positions: np.ndarray,
            p_values: np.ndarray) -> float:
    """Trapezoidal-style discretized action sum over interior samples with
    central-difference rates; supports nonuniform time grids."""
    total = 0.0
    for k in range(1, len(times) - 1):
        span = times[k + 1] - times[k - 1]
        v = (positions[k + 1] - positions[k - 1]) / span
        rates = _pair_rates(positions[k], v)
        kin = math.sqrt(float(np.sum(rates**2)))
        total += kin * p_values[k] * 0.5 * span
    return total


def check_leibnitz_invariance(traj: Trajectory, transform: TransformSpec,
                              params: DpiParams | None = None,
                              derived: DerivedParams | None = None
                              ) -> LeibnitzReport:
    """Apply x -> A(t) x + B(t) and t -> C(t); quantify what changes.

    The relational kinetic term built from pairwise distances is exactly
    invariant under rigid motions in the continuum; the sampled version
    inherits only the central-difference error, which vanishes as dt^2.
    The half-power kinetic exponent makes the discretized action invariant
    under the time reparametrization.
    """
    if transform.rotations.shape[0] != traj.num_samples:
        raise ParameterRangeError(
            "transform samples must align with the trajectory grid")
    moved = (np.einsum("kij,knj->kni", transform.rotations, traj.positions)
             + transform.translations[:, None, :])
    moved_traj = Trajectory(traj.times, moved)

    interior = range(1, traj.num_samples - 1)
    k_orig = np.array([kinetic_pairwise(traj, k) for k in interior])
    k_moved = np.array([kinetic_pairwise(moved_traj, k) for k in interior])
    gaps = np.abs(k_moved - k_orig)
    scale = max(float(np.max(np.abs(k_orig))), 1e-300)

    if params is not None and derived is not None:
        p_vals = np.array([potential_sum(traj.configuration(k), params,
                                         derived)
                           for k in range(traj.num_samples)])
    else:
        p_vals = np.ones(traj.num_samples)

    action_orig = _action(traj.times, traj.positions, p_vals)
    action_re = _action(transform.time_map, traj.positions, p_vals)
    denom = max(abs(action_orig), 1e-300)
    return LeibnitzReport(
        kinetic_gaps=gaps,
        max_kinetic_gap_rel=float(np.max(gaps)) / scale,
        action_original=action_orig,
        action_reparametrized=action_re,
        action_rel_change=abs(action_re - action_orig) / denom,
    )
