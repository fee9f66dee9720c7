import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpilab.errors import ParameterRangeError
from dpilab.params import DpiParams, PhysicalConstants, derive_params

# frozen from an arbitrary-precision evaluation of the defining formulas
REF_ALPHA_L4 = {
    "beta": 0.93301270189221932,
    "gamma": 3.8637033051562731,
    "epsilon": 0.70710678118654752,
    "omega": 0.23430456992632961,
    "prefactor_c": 1.3410203443265361,
}

valid_triples = st.tuples(
    st.floats(-10.0, 10.0).filter(lambda v: v != 0.0),
    st.floats(0.05, 5.0),
    st.floats(2.0, 100.0),
)


def test_degenerate_boundary_admitted():
    d = derive_params(DpiParams(u0=1.0, alpha_s=1.0, alpha_l=2.0))
    assert d.beta == pytest.approx(0.5, abs=0)
    assert d.gamma == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert d.epsilon == pytest.approx(0.707107, abs=5e-7)


def test_reference_values_alpha_l_4():
    d = derive_params(DpiParams(u0=1.0, alpha_s=1.0, alpha_l=4.0))
    for name, want in REF_ALPHA_L4.items():
        assert getattr(d, name) == pytest.approx(want, rel=1e-13), name


def test_large_alpha_l_limits():
    alpha_l = 1e4
    t2 = (1.0 / alpha_l) ** 2
    d = derive_params(DpiParams(u0=1.0, alpha_s=1.0, alpha_l=alpha_l))
    assert abs(1.0 - d.beta) == pytest.approx(t2, rel=1e-4)
    assert abs(1.0 - d.gamma / alpha_l) == pytest.approx(t2 / 2.0, rel=1e-4)
    assert d.omega == pytest.approx(d.epsilon**2 / 2.0, rel=3.0 * t2)


def test_limit_errors_shrink_quadratically():
    # the deviations from the infinite-range limits fall off as t^2
    ts = np.array([2.0**-k for k in range(3, 9)])
    errs_beta, errs_gamma, errs_omega = [], [], []
    for t in ts:
        d = derive_params(DpiParams(u0=1.0, alpha_s=1.0, alpha_l=1.0 / t))
        errs_beta.append(1.0 - d.beta)
        errs_gamma.append(1.0 - d.gamma * t)
        errs_omega.append(1.0 - d.omega / (d.epsilon**2 / 2.0))
    for errs in (errs_beta, errs_gamma, errs_omega):
        slope = np.polyfit(np.log(ts), np.log(errs), 1)[0]
        assert 1.9 <= slope <= 2.1


def test_range_violation_names_discriminant():
    with pytest.raises(ParameterRangeError, match="discriminant"):
        DpiParams(u0=1.0, alpha_s=1.0, alpha_l=1.9)


@pytest.mark.parametrize("kwargs", [
    dict(u0=1.0, alpha_s=-1.0, alpha_l=4.0),
    dict(u0=1.0, alpha_s=0.0, alpha_l=4.0),
    dict(u0=1.0, alpha_s=1.0, alpha_l=0.0),
    dict(u0=math.inf, alpha_s=1.0, alpha_l=4.0),
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ParameterRangeError):
        DpiParams(**kwargs)


def test_constants_must_be_positive():
    with pytest.raises(ParameterRangeError):
        PhysicalConstants(hbar=0.0)
    assert PhysicalConstants(hbar=2.0, mass=4.0).qp_coupling == 0.5


@given(valid_triples)
@settings(max_examples=100)
def test_derived_invariants(triple):
    u0, alpha_s, ratio = triple
    p = DpiParams(u0, alpha_s, ratio * alpha_s)
    d = derive_params(p)
    assert 0.5 <= d.beta <= 1.0
    assert d.gamma >= math.sqrt(2.0) * p.alpha_s * (1.0 - 1e-12)
    assert d.omega > 0.0
    assert 2.0 * d.epsilon**2 == pytest.approx(p.alpha_s**2, rel=1e-15)
    assert d.quantum_coupling == pytest.approx(p.u0 * d.prefactor_c * d.omega,
                                               rel=1e-15)


@given(st.floats(0.1, 2.0), st.floats(2.0, 50.0), st.floats(1.0, 4.0))
@settings(max_examples=60)
def test_beta_omega_monotone_in_alpha_l(alpha_s, ratio, bump):
    lo = derive_params(DpiParams(1.0, alpha_s, ratio * alpha_s))
    hi = derive_params(DpiParams(1.0, alpha_s, ratio * bump * alpha_s))
    assert hi.beta >= lo.beta
    assert hi.omega >= lo.omega


def test_exponent_identity_holds_exactly():
    # the subtraction cancels two O(1/eps^2) terms down to O(1/gamma^2), so
    # double precision resolves the identity to 1e-12 for gamma/eps up to
    # about 50; the sampled range ratios stay inside that window
    rng = np.random.default_rng(7)
    for _ in range(100):
        alpha_s = rng.uniform(0.1, 3.0)
        alpha_l = alpha_s * math.exp(rng.uniform(math.log(2.0), math.log(30.0)))
        d = derive_params(DpiParams(1.0, alpha_s, alpha_l))
        lhs = -1.0 / (2.0 * d.epsilon**2) + d.omega / d.epsilon**4
        rhs = -1.0 / (2.0 * d.epsilon**2 + d.gamma**2)
        assert abs(lhs - rhs) <= 1e-12 * abs(rhs)
