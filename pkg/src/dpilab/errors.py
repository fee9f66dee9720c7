"""Exception types shared across the package."""


class DpilabError(Exception):
    """Base class for all package-specific errors."""


class ParameterRangeError(DpilabError, ValueError):
    """An interaction or model parameter is outside its admissible range."""


class DegenerateDensityError(DpilabError, ArithmeticError):
    """Density at the probe fell below the conditioning floor.

    Quantities with a 1/rho or 1/sqrt(rho) factor are unreliable there.
    Harness code catches this and counts the probe as degenerate instead
    of crashing.
    """


class DomainError(DpilabError, ValueError):
    """Evaluation requested outside a model's domain (e.g. r = 0 for the
    shell density, whose exponential has an essential singularity there)."""


class CapabilityError(DpilabError, NotImplementedError):
    """The density model cannot supply derivatives of the requested order."""


class UnsupportedSamplerError(DpilabError, ValueError):
    """No sampler is defined for the requested target density."""


class CloseApproachError(DpilabError, RuntimeError):
    """Two particles approached the pair-potential singularity; the step is
    rejected rather than softened."""


class QuadratureError(DpilabError, ArithmeticError):
    """A quadrature failed outright (non-finite result)."""


class CoincidentParticlesError(DpilabError, ArithmeticError):
    """Two particles coincide; the pairwise distance derivative is undefined."""
