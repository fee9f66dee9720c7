"""Numerical laboratory for a two-range Gaussian direct particle interaction.

The package evaluates the interaction in four equivalent-in-regime forms
(direct, density integral, Gaussian closed form, smoothing-operator series),
compares them against the quantum potential, extracts the emergent
inverse-distance tail of the radially discretized series, and exercises the
relational dynamics with its cosmological coupling scalings.
"""

__version__ = "0.1.0"

from .density import (
    GaussianMixture,
    MultiKindConfiguration,
    ParticleConfiguration,
    ProductDensity,
    RadialShell,
    Superposition,
    Uniform,
    density_at,
    sample_configuration,
    sqrt_density_laplacian,
    sqrt_laplacian_stack,
    sqrt_sum_vs_sum_sqrt_gap,
)
from .dynamics import (
    CosmologyState,
    EnergyLedger,
    Trajectory,
    TransformSpec,
    check_leibnitz_invariance,
    g_scaling,
    hbar_scaling,
    integrate_effective,
    kinetic_pairwise,
    potential_sum,
    product_lagrangian,
    shell_kinetic,
)
from .equivalence import (
    CorrectionReport,
    SweepReport,
    SweepSpec,
    correction_magnitude,
    run_equivalence_sweep,
    verify_insertion_identity,
)
from .gravity import (
    RadialSeriesSpec,
    TailFitReport,
    effective_coupling,
    fit_power_law,
    radial_series_potential,
    series_coefficient,
    truncation_order,
)
from .params import DerivedParams, DpiParams, PhysicalConstants, derive_params
from .potentials import (
    PotentialProbe,
    bohm_qp,
    dpi_closed,
    dpi_direct,
    dpi_direct_multi,
    dpi_integral,
    gaussian_heat_action_check,
    heat_kernel_convolution,
    heat_series,
    heat_series_multi,
    heat_series_partial_sums,
)
from .quadrature import IntegralResult, QuadratureSpec
