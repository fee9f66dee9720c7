"""Interaction constants and the derived quantities of the potential chain.

The interaction has one strength u0 and two Gaussian ranges, a short one
alpha_s and a long one alpha_l.  Rewriting the pair potential as a density
functional introduces a fixed set of derived constants:

    epsilon      width of the Gaussian standing in for a point kernel,
                 tied to the short range by 2*epsilon^2 = alpha_s^2
    beta         dimensionless insertion parameter,
                 beta = (1 + sqrt(1 - 4*alpha_s^2/alpha_l^2)) / 2
    gamma        effective long-range width of the density integral,
                 gamma = sqrt(2)*alpha_s / sqrt(1 - sqrt(1 - 4 t^2)),
                 t = alpha_s/alpha_l, algebraically gamma = alpha_l*sqrt(beta)
    omega        coefficient of the smoothing (heat) operator,
                 omega = epsilon^2 * gamma^2 / (2 * (2*epsilon^2 + gamma^2))
    prefactor_c  closed-form constant
                 (4 pi epsilon^2 beta)^(-3/4) * (pi/(1/(2 eps^2)+1/gamma^2))^(3/2)
    quantum_coupling = u0 * prefactor_c * omega, the coefficient that plays
                 the -hbar^2/2m role in the series form of the potential.

All values are plain floats in one consistent unit system chosen per
experiment; there is no unit-conversion machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterRangeError

__all__ = ["DpiParams", "DerivedParams", "PhysicalConstants", "derive_params"]


@dataclass(frozen=True)
class DpiParams:
    """Raw interaction constants.

    u0 is sign-free: matching the conventional quantum-potential coupling
    -hbar^2/2m requires u0 < 0.  The sign is carried through unchanged and
    reported, never silently flipped.
    """

    u0: float
    alpha_s: float
    alpha_l: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u0) and math.isfinite(self.alpha_s)
                and math.isfinite(self.alpha_l)):
            raise ParameterRangeError("interaction constants must be finite")
        if self.alpha_s <= 0 or self.alpha_l <= 0:
            raise ParameterRangeError(
                f"ranges must be positive, got alpha_s={self.alpha_s}, "
                f"alpha_l={self.alpha_l}")
        disc = 1.0 - 4.0 * self.alpha_s**2 / self.alpha_l**2
        if disc < 0.0:
            # the insertion split becomes complex below alpha_l = 2*alpha_s
            raise ParameterRangeError(
                f"alpha_l must be at least 2*alpha_s: discriminant "
                f"1 - 4*alpha_s^2/alpha_l^2 = {disc:.6g} is negative, so the "
                f"insertion parameters would be complex")

    @property
    def range_ratio(self) -> float:
        """t = alpha_s / alpha_l, the small parameter of the expansion."""
        return self.alpha_s / self.alpha_l


@dataclass(frozen=True)
class DerivedParams:
    """Constants derived from DpiParams; immutable once computed."""

    epsilon: float
    beta: float
    gamma: float
    omega: float
    prefactor_c: float
    quantum_coupling: float

    def as_dict(self) -> dict[str, float]:
        return {
            "epsilon": self.epsilon,
            "beta": self.beta,
            "gamma": self.gamma,
            "omega": self.omega,
            "prefactor_c": self.prefactor_c,
            "quantum_coupling": self.quantum_coupling,
        }


@dataclass(frozen=True)
class PhysicalConstants:
    """hbar, particle mass and Newton constant used for reporting."""

    hbar: float = 1.0
    mass: float = 1.0
    g_newton: float = 1.0

    def __post_init__(self) -> None:
        if self.hbar <= 0 or self.mass <= 0 or self.g_newton <= 0:
            raise ParameterRangeError("physical constants must be positive")

    @property
    def qp_coupling(self) -> float:
        """hbar^2 / (2 m), the quantum-potential coefficient magnitude."""
        return self.hbar**2 / (2.0 * self.mass)


def derive_params(p: DpiParams) -> DerivedParams:
    """Compute every derived constant of the potential-form chain.

    The degenerate boundary alpha_l = 2*alpha_s is admitted: beta = 1/2 and
    gamma = sqrt(2)*alpha_s there, with no singularity.
    """
    disc = 1.0 - 4.0 * p.alpha_s**2 / p.alpha_l**2
    sq = math.sqrt(disc)
    beta = 0.5 * (1.0 + sq)
    # gamma = sqrt(2)*alpha_s/sqrt(1-sq) loses precision for alpha_l >> alpha_s;
    # rationalising gives the exactly equivalent, stable form alpha_l*sqrt(beta).
    gamma = p.alpha_l * math.sqrt(beta)
    epsilon = p.alpha_s / math.sqrt(2.0)
    eps2 = epsilon * epsilon
    gamma2 = gamma * gamma
    omega = 0.5 * eps2 * gamma2 / (2.0 * eps2 + gamma2)
    prefactor_c = ((4.0 * math.pi * eps2 * beta) ** -0.75
                   * (math.pi / (1.0 / (2.0 * eps2) + 1.0 / gamma2)) ** 1.5)
    return DerivedParams(
        epsilon=epsilon,
        beta=beta,
        gamma=gamma,
        omega=omega,
        prefactor_c=prefactor_c,
        quantum_coupling=p.u0 * prefactor_c * omega,
    )
