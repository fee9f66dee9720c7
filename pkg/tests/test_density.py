import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpilab.density import (
    DensityModel,
    GaussianMixture,
    MultiKindConfiguration,
    ParticleConfiguration,
    RadialShell,
    Superposition,
    Uniform,
    density_at,
    sample_configuration,
    sqrt_density_laplacian,
    sqrt_laplacian_stack,
    sqrt_sum_vs_sum_sqrt_gap,
    _grid_laplacian_stack,
)
from dpilab.errors import (
    DegenerateDensityError,
    DomainError,
    ParameterRangeError,
    UnsupportedSamplerError,
)


class Scaled(DensityModel):
    """c * rho wrapper used to probe magnitude invariance of ratios."""

    def __init__(self, model, c):
        self.model, self.c = model, c

    def rho(self, x):
        return self.c * self.model.rho(x)

    def grad_rho(self, x):
        return self.c * self.model.grad_rho(x)

    def lap_rho(self, x):
        return self.c * self.model.lap_rho(x)

    def floor_reference(self):
        return self.c * self.model.floor_reference()


# --- density values ---------------------------------------------------------

def test_single_kernel_peak():
    m = GaussianMixture(np.zeros((1, 3)), 1.0)
    assert density_at(m, np.zeros(3)) == pytest.approx(math.pi**-1.5, rel=1e-14)
    assert density_at(m, np.zeros(3)) == pytest.approx(0.179587, abs=5e-7)


def test_uniform_everywhere():
    u = Uniform(2.0)
    pts = np.array([[0.0, 0.0, 0.0], [5.0, -3.0, 1.0]])
    assert np.allclose(density_at(u, pts), 2.0)


def test_shell_limits_and_singularity():
    sh = RadialShell(1.0, 1.0)
    assert density_at(sh, np.array([1e6, 0.0, 0.0])) < 1e-11
    assert density_at(sh, np.array([1e-4, 0.0, 0.0])) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(DomainError):
        density_at(sh, np.zeros(3))


def test_mixture_total_mass_is_count():
    # Monte Carlo integral of rho against a wide normal proposal
    rng = np.random.default_rng(11)
    cfg = rng.normal(0.0, 1.0, (7, 3))
    m = GaussianMixture(cfg, 0.6)
    sigma = 3.0
    pts = rng.normal(0.0, sigma, (200_000, 3))
    weights = density_at(m, pts) / (
        (2.0 * math.pi * sigma**2) ** -1.5
        * np.exp(-np.sum(pts**2, axis=1) / (2.0 * sigma**2)))
    est = weights.mean()
    se = weights.std(ddof=1) / math.sqrt(len(weights))
    assert abs(est - 7.0) <= 3.0 * se


@given(st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3))
@settings(max_examples=25, deadline=None)
def test_translation_equivariance(shift):
    b = np.asarray(shift)
    m = GaussianMixture(np.array([[0.2, 0.0, -1.0], [1.0, 0.5, 0.3]]), 0.8)
    x = np.array([0.4, -0.3, 0.9])
    assert density_at(m.translated(b), x + b) == pytest.approx(
        density_at(m, x), rel=1e-12)


# --- sqrt-density derivatives -----------------------------------------------

def test_sqrt_laplacian_single_gaussian_ratio():
    # rho = exp(-r^2): sqrt(rho) = exp(-r^2/2), lap sqrt/sqrt at 0 is -3
    m = GaussianMixture(np.zeros((1, 3)), 1.0)
    x = np.zeros(3)
    ratio = sqrt_density_laplacian(m, x) / math.sqrt(density_at(m, x))
    assert ratio == pytest.approx(-3.0, rel=1e-14)


def test_sqrt_laplacian_uniform_zero():
    assert sqrt_density_laplacian(Uniform(3.0), np.ones(3)) == 0.0


@pytest.mark.parametrize("model,x", [
    (GaussianMixture(np.array([[0.0, 0.0, 0.0], [1.2, -0.4, 0.6]]), 0.9),
     np.array([0.5, 0.2, -0.1])),
    (RadialShell(1.4, 0.8), np.array([1.1, -0.7, 0.4])),
])
def test_sqrt_laplacian_matches_finite_differences(model, x):
    # central second differences of sqrt(rho), O(h^2) refinement rate
    def fd_lap(h):
        acc = 0.0
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            acc += (math.sqrt(model.rho(x + e)) - 2.0 * math.sqrt(model.rho(x))
                    + math.sqrt(model.rho(x - e))) / h**2
        return acc

    exact = sqrt_density_laplacian(model, x)
    errs = [abs(fd_lap(h) - exact) for h in (0.02, 0.01, 0.005)]
    assert errs[0] > errs[1] > errs[2]
    rate = math.log2(errs[0] / errs[1])
    assert 1.7 <= rate <= 2.3
    assert errs[2] <= 1e-4 * max(abs(exact), 1.0)


def test_ratio_invariant_under_density_rescaling():
    base = GaussianMixture(np.array([[0.0, 0.0, 0.0], [1.0, 0.2, 0.0]]), 0.7)
    x = np.array([0.4, 0.1, -0.2])
    ref = sqrt_density_laplacian(base, x) / math.sqrt(base.rho(x))
    for c in (1e-6, 1.0, 1e6):
        scaled = Scaled(base, c)
        got = sqrt_density_laplacian(scaled, x) / math.sqrt(scaled.rho(x))
        assert got == pytest.approx(ref, rel=1e-12)


def test_density_floor_flags_degenerate():
    m = GaussianMixture(np.zeros((1, 3)), 0.5)
    with pytest.raises(DegenerateDensityError):
        sqrt_density_laplacian(m, np.array([50.0, 0.0, 0.0]))


def test_stack_routes_agree_single_kernel():
    m = GaussianMixture(np.array([[0.3, -0.1, 0.2]]), 1.1)
    x = np.array([1.0, 0.4, -0.3])
    poly = sqrt_laplacian_stack(m, x, 4)
    radial = sqrt_laplacian_stack(Superposition([m.translated(-m.positions[0])]),
                                  x - m.positions[0], 4)
    assert np.allclose(poly, radial, rtol=1e-12)
    generic = sqrt_laplacian_stack(
        GaussianMixture(m.positions + np.array([1e9, 0, 0]) * 0.0, m.epsilon),
        x, 2)
    assert np.allclose(poly[:3], generic, rtol=1e-12)


def test_stack_order2_matches_sympy_oracle():
    sympy = pytest.importorskip("sympy")
    xs, ys, zs = sympy.symbols("x y z", real=True)
    eps = sympy.Rational(4, 5)
    centers = [(0, 0, 0), (sympy.Rational(6, 5), 0, sympy.Rational(1, 2))]
    rho = sum(sympy.exp(-((xs - a) ** 2 + (ys - b) ** 2 + (zs - c) ** 2)
                        / eps**2) for a, b, c in centers)
    rho = rho * (sympy.pi * eps**2) ** sympy.Rational(-3, 2)
    s = sympy.sqrt(rho)

    def lap(f):
        return sympy.diff(f, xs, 2) + sympy.diff(f, ys, 2) + sympy.diff(f, zs, 2)

    point = {xs: sympy.Rational(1, 4), ys: sympy.Rational(-1, 5),
             zs: sympy.Rational(2, 5)}
    want = [float(s.subs(point)), float(sympy.simplify(lap(s)).subs(point)),
            float(lap(sympy.expand(lap(s))).subs(point))]

    m = GaussianMixture(np.array([[0.0, 0.0, 0.0], [1.2, 0.0, 0.5]]), 0.8)
    got = sqrt_laplacian_stack(m, np.array([0.25, -0.2, 0.4]), 2)
    assert np.allclose(got, want, rtol=1e-10)


def test_grid_fallback_consistent_with_exact():
    m = GaussianMixture(np.zeros((1, 3)), 1.0)
    x = np.array([0.5, 0.1, -0.2])
    exact = sqrt_laplacian_stack(m, x, 3)
    grid = _grid_laplacian_stack(lambda p: np.sqrt(m.rho(p)), x, 3, 0.02)
    assert np.allclose(grid, exact, rtol=5e-3)


def test_multi_kernel_high_order_uses_grid_fallback():
    m = GaussianMixture(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 1.0)
    x = np.array([0.4, 0.2, 0.0])
    default = sqrt_laplacian_stack(m, x, 3)         # stencil route, h = eps/4
    assert np.all(np.isfinite(default))
    fine = sqrt_laplacian_stack(m, x, 3, grid_step=0.02)
    exact2 = sqrt_laplacian_stack(m, x, 2)
    assert fine[1] == pytest.approx(exact2[1], rel=1e-4)
    assert fine[2] == pytest.approx(exact2[2], rel=1e-3)
    assert default[1] == pytest.approx(exact2[1], rel=0.05)


# --- sampling ----------------------------------------------------------------

def test_sampler_deterministic_and_empty():
    target = GaussianMixture(np.zeros((1, 3)), math.sqrt(2.0))
    a = sample_configuration(target, 50, seed=42)
    b = sample_configuration(target, 50, seed=42)
    assert np.array_equal(a.positions, b.positions)
    assert sample_configuration(target, 0, seed=1).count == 0


def test_sampler_mean_law_of_large_numbers():
    # kernel exp(-r^2/eps^2) with eps = sqrt(2) is the unit isotropic normal
    target = GaussianMixture(np.zeros((1, 3)), math.sqrt(2.0))
    cfg = sample_configuration(target, 10_000, seed=3)
    bound = 5.0 / math.sqrt(10_000)
    assert np.all(np.abs(cfg.positions.mean(axis=0)) < bound)


def test_sampler_unsupported_targets():
    with pytest.raises(UnsupportedSamplerError):
        sample_configuration(Uniform(1.0), 10, seed=0)
    with pytest.raises(UnsupportedSamplerError):
        sample_configuration(RadialShell(1.0, 1.0), 10, seed=0)


# --- square-root sum property -------------------------------------------------

def test_gap_single_kernel_zero():
    cfg = ParticleConfiguration(np.array([[0.5, 0.0, 0.0]]))
    gap = sqrt_sum_vs_sum_sqrt_gap(cfg, 1.0, np.array([0.5, 0.0, 0.0]))
    assert gap == 0.0


def test_gap_separated_kernels_tiny():
    cfg = ParticleConfiguration(np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]))
    gap = sqrt_sum_vs_sum_sqrt_gap(cfg, 1.0, np.zeros(3))
    assert gap < 1e-20


def test_gap_coincident_worst_case():
    cfg = ParticleConfiguration(np.zeros((2, 3)))
    gap = sqrt_sum_vs_sum_sqrt_gap(cfg, 1.0, np.zeros(3))
    assert gap == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-14)


def test_gap_decays_with_separation():
    eps = 1.0
    meds = []
    for sep in (2.0, 4.0, 6.0, 8.0):
        cfg = ParticleConfiguration(np.array([[0.0, 0.0, 0.0],
                                              [sep, 0.0, 0.0]]))
        probes = np.array([[0.1, 0.0, 0.0], [sep / 4, 0.1, 0.0],
                           [0.0, 0.3, 0.2]])
        meds.append(float(np.median(sqrt_sum_vs_sum_sqrt_gap(cfg, eps, probes))))
    assert meds[0] > meds[1] > meds[2] > meds[3]


# --- configurations -----------------------------------------------------------

def test_configuration_csv_round_trip(tmp_path):
    pos = np.array([[0.1, -0.2, 0.3], [1.5, 2.5, -3.5]])
    for kinds in (None, ("a", "b")):
        cfg = ParticleConfiguration(pos, kinds)
        path = tmp_path / "cfg.csv"
        cfg.to_csv(path)
        back = ParticleConfiguration.from_csv(path)
        assert np.array_equal(back.positions, pos)
        assert back.kinds == kinds


def test_configuration_validation():
    with pytest.raises(ParameterRangeError):
        ParticleConfiguration(np.array([[math.nan, 0.0, 0.0]]))
    with pytest.raises(ParameterRangeError):
        ParticleConfiguration(np.zeros((2, 3)), kinds=("a",))


def test_multikind_grouping_and_count_check():
    cfg = ParticleConfiguration(
        np.arange(12.0).reshape(4, 3), kinds=("a", "b", "a", "b"))
    mk = MultiKindConfiguration.from_configuration(cfg)
    assert mk.num_kinds == 2 and mk.count_per_kind == 2
    bad = ParticleConfiguration(
        np.arange(9.0).reshape(3, 3), kinds=("a", "b", "a"))
    with pytest.raises(ParameterRangeError):
        MultiKindConfiguration.from_configuration(bad)
