import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpilab.density import (
    GaussianMixture,
    MultiKindConfiguration,
    ParticleConfiguration,
    ProductDensity,
    Uniform,
    sqrt_density_laplacian,
)
from dpilab.errors import CapabilityError, DegenerateDensityError, ParameterRangeError
from dpilab.params import DerivedParams, DpiParams, PhysicalConstants, derive_params
from dpilab.potentials import (
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
    make_potential_probe,
    write_probes_csv,
)
from dpilab.quadrature import QuadratureSpec


@pytest.fixture(scope="module")
def setup():
    params = DpiParams(u0=1.0, alpha_s=1.0, alpha_l=10.0)
    return params, derive_params(params)


def rotation(axis, angle):
    axis = np.asarray(axis, float)
    axis /= np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


# --- direct form --------------------------------------------------------------

def test_direct_single_particle_at_location(setup):
    params, derived = setup
    cfg = ParticleConfiguration(np.zeros((1, 3)))
    val = dpi_direct(params, derived, cfg, np.zeros(3))
    assert val == pytest.approx(1.9687012432153025, rel=1e-13)


def test_direct_far_second_particle_negligible(setup):
    params, derived = setup
    near = ParticleConfiguration(np.zeros((1, 3)))
    far = ParticleConfiguration(np.array([[0.0, 0.0, 0.0],
                                          [500.0, 0.0, 0.0]]))
    a = dpi_direct(params, derived, near, np.zeros(3))
    b = dpi_direct(params, derived, far, np.zeros(3))
    assert abs(a - b) <= 1e-10 * abs(a)


@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3),
       st.floats(0.0, 2 * math.pi))
@settings(max_examples=20, deadline=None)
def test_direct_and_closed_rigid_motion_invariant(shift, angle):
    params = DpiParams(u0=-2.0, alpha_s=1.0, alpha_l=5.0)
    derived = derive_params(params)
    pos = np.array([[0.0, 0.0, 0.0], [2.0, 0.5, -0.3], [-1.0, 1.5, 0.8]])
    x = np.array([0.8, 0.4, 0.1])
    b = np.asarray(shift)
    rot = rotation([0.3, -0.5, 0.81], angle)
    cfg = ParticleConfiguration(pos)
    moved = ParticleConfiguration(pos @ rot.T + b)
    for fn in (dpi_direct, dpi_closed):
        ref = fn(params, derived, cfg, x)
        got = fn(params, derived, moved, rot @ x + b)
        assert got == pytest.approx(ref, rel=1e-10)


def test_direct_degenerate_probe_flagged(setup):
    params, derived = setup
    cfg = ParticleConfiguration(np.zeros((1, 3)))
    with pytest.raises(DegenerateDensityError):
        dpi_direct(params, derived, cfg, np.array([100.0, 0.0, 0.0]))


# --- closed form ---------------------------------------------------------------

def test_closed_single_particle_value(setup):
    params, derived = setup
    cfg = ParticleConfiguration(np.zeros((1, 3)))
    val = dpi_closed(params, derived, cfg, np.zeros(3))
    expect = derived.prefactor_c * (math.pi * derived.epsilon**2) ** 0.75
    assert val == pytest.approx(expect, rel=1e-13)


def test_closed_long_range_limit_matches_plain_sum():
    # as alpha_l/alpha_s grows the closed kernel width approaches alpha_l^2
    cfg = ParticleConfiguration(np.array([[0.0, 0.0, 0.0], [3.0, 1.0, 0.0]]))
    x = np.array([1.0, -0.5, 0.2])
    ratios = []
    for alpha_l in (10.0, 40.0, 160.0):
        params = DpiParams(1.0, 1.0, alpha_l)
        derived = derive_params(params)
        d2 = np.sum((x - cfg.positions) ** 2, axis=1)
        closed_sum = np.exp(-d2 / (2 * derived.epsilon**2
                                   + derived.gamma**2)).sum()
        plain_sum = np.exp(-d2 / alpha_l**2).sum()
        ratios.append(abs(closed_sum / plain_sum - 1.0))
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 1e-4


# --- integral form ---------------------------------------------------------------

def test_integral_uniform_closed_constant(setup):
    params, derived = setup
    res = dpi_integral(params, derived, Uniform(2.0), np.zeros(3))
    expect = params.u0 * (4 * derived.beta) ** -0.75 \
        * (math.pi * derived.gamma**2) ** 1.5
    assert res.value == pytest.approx(expect, rel=1e-12)


def test_integral_matches_closed_single_kernel(setup):
    params, derived = setup
    cfg = ParticleConfiguration(np.zeros((1, 3)))
    x = np.array([5.0, 0.0, 0.0])
    res = dpi_integral(params, derived, GaussianMixture(cfg, derived.epsilon), x)
    closed = dpi_closed(params, derived, cfg, x)
    assert res.value == pytest.approx(closed, rel=1e-10)


def test_integral_monte_carlo_cross_check(setup):
    params, derived = setup
    cfg = ParticleConfiguration(np.zeros((1, 3)))
    model = GaussianMixture(cfg, derived.epsilon)
    x = np.array([3.0, 0.0, 0.0])
    gh = dpi_integral(params, derived, model, x)
    mc = dpi_integral(params, derived, model, x,
                      QuadratureSpec(method="monte-carlo", samples=200_000,
                                     seed=5))
    assert abs(mc.value - gh.value) <= 3.0 * mc.error_estimate
    assert mc.method == "monte-carlo" and gh.method == "gauss-hermite"


def test_integral_reports_nonconvergence(setup):
    params, derived = setup
    model = GaussianMixture(ParticleConfiguration(np.zeros((1, 3))),
                            derived.epsilon)
    res = dpi_integral(params, derived, model, np.array([2.0, 0.0, 0.0]),
                       QuadratureSpec(method="monte-carlo", samples=200,
                                      seed=1, tolerance=1e-9))
    assert not res.converged
    assert math.isfinite(res.value)


# --- series and smoothing operator -----------------------------------------------

def test_series_order0_is_constant(setup):
    params, derived = setup
    m = GaussianMixture(np.zeros((1, 3)), 1.0)
    val = heat_series(params, derived, m, np.array([0.3, 0.1, 0.0]), 0)
    assert val == pytest.approx(params.u0 * derived.prefactor_c, rel=1e-15)


def test_series_uniform_all_orders_constant(setup):
    params, derived = setup
    for k in (1, 3, 6):
        val = heat_series(params, derived, Uniform(4.0), np.ones(3), k)
        assert val == pytest.approx(params.u0 * derived.prefactor_c, rel=1e-15)


def test_series_order1_single_gaussian_center(setup):
    params, derived = setup
    m = GaussianMixture(np.zeros((1, 3)), 1.0)   # sqrt(rho) ~ exp(-r^2/2)
    val = heat_series(params, derived, m, np.zeros(3), 1)
    expect = params.u0 * derived.prefactor_c * (1.0 + derived.omega * -3.0)
    assert val == pytest.approx(expect, rel=1e-14)


def test_convolution_preserves_constants():
    res = heat_kernel_convolution(Uniform(9.0), 0.2, np.zeros(3))
    assert res.value == pytest.approx(3.0, rel=1e-13)


def test_convolution_widened_gaussian_closed_form():
    # sqrt(rho) = c exp(-r^2/(2 s^2)) convolves to the widened Gaussian
    s, omega = 1.3, 0.35
    m = GaussianMixture(np.zeros((1, 3)), s)
    amp = (math.pi * s**2) ** -0.75
    for r in (0.0, 0.8, 2.1):
        x = np.array([r, 0.0, 0.0])
        res = heat_kernel_convolution(m, omega, x)
        want = amp * (s**2 / (s**2 + 2 * omega)) ** 1.5 \
            * math.exp(-r * r / (2 * (s**2 + 2 * omega)))
        assert res.value == pytest.approx(want, rel=1e-12)


def test_series_converges_to_convolution(setup):
    params, derived = setup
    m = GaussianMixture(np.zeros((1, 3)), 3.0)
    x = np.array([1.0, 0.5, -0.4])
    target = heat_kernel_convolution(m, derived.omega, x).value
    target_pot = params.u0 * derived.prefactor_c * target / math.sqrt(m.rho(x))
    sums = heat_series_partial_sums(params, derived, m, x, 6)
    gaps = np.abs(sums - target_pot) / abs(target_pot)
    assert gaps[-1] < gaps[0]
    assert gaps[-1] < 1e-6


def test_heat_action_exponent_identity_and_amplitude():
    rng = np.random.default_rng(12)
    for _ in range(30):
        alpha_s = rng.uniform(0.2, 2.0)
        params = DpiParams(1.0, alpha_s, alpha_s * rng.uniform(2.0, 30.0))
        rep = gaussian_heat_action_check(derive_params(params))
        assert rep.exponent_rel_error < 1e-12
        assert 0.0 < rep.amplitude_ratio < 1.0


def test_heat_action_small_omega_limit():
    # amplitude ratio -> 1 as the smoothing time vanishes (formula limit)
    d = DerivedParams(epsilon=1.0, beta=1.0, gamma=1e6, omega=1e-9,
                      prefactor_c=1.0, quantum_coupling=1.0)
    rep = gaussian_heat_action_check(d)
    assert rep.amplitude_ratio == pytest.approx(1.0, abs=1e-8)


# --- quantum potential -----------------------------------------------------------

def test_qp_single_gaussian_closed_form():
    # rho = exp(-r^2/s^2): Q = -(hbar^2/2m)(r^2/s^4 - 3/s^2)
    s = 1.0
    c = PhysicalConstants(hbar=1.0, mass=1.0)
    m = GaussianMixture(np.zeros((1, 3)), s)
    for r in np.linspace(0.0, 2.5, 20):
        q = bohm_qp(c, m, np.array([r, 0.0, 0.0]))
        want = -0.5 * (r**2 / s**4 - 3.0 / s**2)
        assert q == pytest.approx(want, rel=1e-10, abs=1e-12)
    assert bohm_qp(c, m, np.zeros(3)) == pytest.approx(1.5, rel=1e-13)


def test_qp_uniform_zero():
    c = PhysicalConstants()
    assert bohm_qp(c, Uniform(5.0), np.zeros(3)) == 0.0


def test_qp_finite_difference_rate():
    c = PhysicalConstants(hbar=1.3, mass=0.7)
    m = GaussianMixture(np.array([[0.0, 0.0, 0.0], [1.1, 0.3, -0.2]]), 0.9)
    x = np.array([0.5, -0.1, 0.3])
    exact = bohm_qp(c, m, x)

    def fd(h):
        lap = 0.0
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            lap += (math.sqrt(m.rho(x + e)) - 2 * math.sqrt(m.rho(x))
                    + math.sqrt(m.rho(x - e))) / h**2
        return -c.qp_coupling * lap / math.sqrt(m.rho(x))

    errs = [abs(fd(h) - exact) for h in (0.04, 0.02, 0.01)]
    rate = math.log2(errs[0] / errs[1])
    assert 1.7 <= rate <= 2.3


# --- many kinds -------------------------------------------------------------------

def test_multi_single_kind_reduces_to_direct(setup):
    params, derived = setup
    rng = np.random.default_rng(0)
    pos = rng.normal(0.0, 2.0, (5, 3))
    cfg = ParticleConfiguration(pos)
    mk = MultiKindConfiguration(pos[None, :, :])
    for _ in range(50):
        x = rng.normal(0.0, 1.5, 3)
        try:
            want = dpi_direct(params, derived, cfg, x)
        except DegenerateDensityError:
            continue
        got = dpi_direct_multi(params, derived, mk, x[None, :])
        assert got == pytest.approx(want, rel=1e-12)


def test_multi_two_kinds_at_joint_location(setup):
    params, derived = setup
    mk = MultiKindConfiguration(np.zeros((2, 1, 3)))
    val = dpi_direct_multi(params, derived, mk, np.zeros((2, 3)))
    assert val == pytest.approx((math.pi * derived.epsilon**2) ** 3, rel=1e-12)


def test_multi_permutation_invariance(setup):
    params, derived = setup
    rng = np.random.default_rng(4)
    pos = rng.normal(0.0, 1.0, (2, 3, 3))
    x = rng.normal(0.0, 1.0, (2, 3))
    base = dpi_direct_multi(params, derived, MultiKindConfiguration(pos), x)
    perm = [2, 0, 1]
    permuted = dpi_direct_multi(params, derived,
                                MultiKindConfiguration(pos[:, perm, :]), x)
    assert permuted == pytest.approx(base, rel=1e-13)


def test_series_multi_reduces_and_separates(setup):
    params, derived = setup
    m = GaussianMixture(np.zeros((1, 3)), 1.0)
    x = np.array([0.4, 0.1, 0.0])
    one = heat_series_multi(params, derived, ProductDensity([m]), x[None, :], 3)
    assert one == pytest.approx(heat_series(params, derived, m, x, 3),
                                rel=1e-12)
    # two identical kinds, order 1: constant * (1 + 2 omega ratio)
    two = heat_series_multi(params, derived, ProductDensity([m, m]),
                            np.stack([x, x]), 1)
    ratio = sqrt_density_laplacian(m, x) / math.sqrt(m.rho(x))
    want = params.u0 * derived.prefactor_c**2 * (1 + 2 * derived.omega * ratio)
    assert two == pytest.approx(want, rel=1e-12)


def test_series_multi_product_of_uniforms_constant(setup):
    params, derived = setup
    pd = ProductDensity([Uniform(1.0), Uniform(3.0)])
    val = heat_series_multi(params, derived, pd, np.zeros((2, 3)), 4)
    assert val == pytest.approx(params.u0 * derived.prefactor_c**2, rel=1e-14)


def test_series_multi_rejects_nonproduct(setup):
    params, derived = setup
    with pytest.raises(CapabilityError):
        heat_series_multi(params, derived, Uniform(1.0), np.zeros((1, 3)), 1)


# --- probe records -----------------------------------------------------------------

def test_probe_record_and_csv(tmp_path, setup):
    params, derived = setup
    cfg = ParticleConfiguration(np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]]))
    good = make_potential_probe(params, derived, cfg,
                                np.array([2.0, 0.5, 0.0]), orders=(1, 2))
    assert not good.degenerate
    assert good.nearest_particle_distance == pytest.approx(
        math.hypot(2.0, 0.5), rel=1e-12)
    bad = make_potential_probe(params, derived, cfg,
                               np.array([200.0, 0.0, 0.0]))
    assert bad.degenerate and math.isnan(bad.u_direct)
    path = tmp_path / "probes.csv"
    write_probes_csv(path, [good, bad], params, derived, config_hash="ab12")
    text = path.read_text()
    assert "u_series_2" in text and "config_sha256=ab12" in text
    assert text.count("\n") == 2 + 1 + 1 + 2   # comments, hash, header, rows
