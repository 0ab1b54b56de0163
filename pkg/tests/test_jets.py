import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degflat.errors import DomainError, MismatchError, SingularityError
from degflat.jets import (Jet, bump, bump_jet, fit_gevrey, jet_add, jet_affine_compose, jet_exp,
                          jet_log, jet_mul, jet_pow, jet_reciprocal, jet_scale,
                          leibniz_derivatives)


def poly_jet(coeffs, order, center=0.0):
    c = np.zeros(order + 1)
    c[: len(coeffs)] = coeffs
    return Jet(center, c)


def test_product_of_linear_jets():
    out = jet_mul(poly_jet([1, 1], 2), poly_jet([1, -1], 2))
    assert np.array_equal(out.coeffs, [1, 0, -1])


def test_exp_of_zero_jet():
    assert np.array_equal(jet_exp(poly_jet([0], 5)).coeffs, [1, 0, 0, 0, 0, 0])


def test_reciprocal_geometric_series():
    assert np.allclose(jet_reciprocal(poly_jet([1, 1], 3)).coeffs, [1, -1, 1, -1], atol=0)


def test_reciprocal_of_zero_constant():
    with pytest.raises(SingularityError):
        jet_reciprocal(poly_jet([0, 1], 3))


def test_mismatched_orders_and_centres():
    with pytest.raises(MismatchError):
        jet_add(poly_jet([1], 2), poly_jet([1], 3))
    with pytest.raises(MismatchError):
        jet_mul(poly_jet([1], 2), poly_jet([1], 2, center=1.0))


def test_jet_rejects_non_finite():
    with pytest.raises(ValueError):
        Jet(0.0, [1.0, math.inf])


def test_exp_log_roundtrip():
    g = Jet(0.3, [0.7, -0.2, 0.5, 0.1, -0.3, 0.05])
    back = jet_log(jet_exp(g))
    assert np.allclose(back.coeffs, g.coeffs, atol=1e-14)


def test_pow_matches_binomial_series():
    # (1 + t)^p has Taylor coefficients binom(p, n)
    p = -2.5
    out = jet_pow(poly_jet([1, 1], 8), p).coeffs
    ref = [float(mp.binomial(p, n)) for n in range(9)]
    assert np.allclose(out, ref, rtol=1e-13)


def test_affine_compose_scales_coefficients():
    e = Jet.from_derivatives(0.0, np.ones(6))  # jet of e^r at r = 0
    out = jet_affine_compose((2.0, 1.0), e)  # e^(2t + 1) at t = -1/2
    assert out.center == -0.5
    assert np.allclose(out.derivatives(), 2.0 ** np.arange(6))


def test_operators():
    a = poly_jet([1, 2, 3], 2)
    assert np.array_equal((a + 1).coeffs, [2, 2, 3])
    assert np.array_equal((1 - a).coeffs, [0, -2, -3])
    assert np.array_equal((2 * a).coeffs, jet_scale(2, a).coeffs)
    assert np.allclose((a / a).coeffs, [1, 0, 0], atol=1e-15)


# --- bump ---------------------------------------------------------------------------

def mp_bump(s, t):
    p = 1 / (mp.mpf(s) - 1)
    a = mp.exp(-(1 - t) ** (-p))
    b = mp.exp(-t ** (-p))
    return a / (a + b)


def mp_bump_small_part(s, t, left):
    # 1 - phi on the left half, phi on the right; the derivatives agree up
    # to sign and the small one keeps its digits
    p = 1 / (mp.mpf(s) - 1)
    a = mp.exp(-(1 - t) ** (-p))
    b = mp.exp(-t ** (-p))
    return (b if left else a) / (a + b)


def test_bump_midpoint():
    assert bump_jet(1.5, 0.5, 0).value == 0.5


def test_bump_before_start():
    assert np.array_equal(bump_jet(1.5, -0.2, 5).derivatives(), [1, 0, 0, 0, 0, 0])


@pytest.mark.parametrize("s", [1.0, 2.0, 0.5, 2.5])
def test_bump_domain(s):
    with pytest.raises(DomainError):
        bump_jet(s, 0.5, 3)


def test_bump_first_derivative_finite_difference():
    h = 1e-5
    fd = (bump(1.5, 0.3 + h) - bump(1.5, 0.3 - h)) / (2 * h)
    d1 = bump_jet(1.5, 0.3, 1).derivatives()[1]
    assert d1 == pytest.approx(float(fd), rel=1e-6)


def richardson_derivative(f, t, n, h):
    # central n-th difference at steps h and h/2, one Richardson step
    def cdiff(step):
        k = range(n + 1)
        return sum((-1) ** (n - j) * mp.binomial(n, j) * f(t + (j - mp.mpf(n) / 2) * step)
                   for j in k) / step ** n
    return (4 * cdiff(h / 2) - cdiff(h)) / 3


@pytest.mark.parametrize("s", [1.3, 1.5, 1.8])
@pytest.mark.parametrize("t", [0.05, 0.2, 0.5, 0.8, 0.95])
def test_bump_derivatives_against_richardson(s, t):
    with mp.workdps(60):
        ref = [richardson_derivative(lambda x: mp_bump_small_part(s, x, t < 0.5), mp.mpf(t), n,
                                     mp.mpf("1e-6")) for n in range(1, 9)]
    sign = -1.0 if t < 0.5 else 1.0
    ref = sign * np.array([float(v) for v in ref])
    got = bump_jet(s, t, 8).derivatives()[1:]
    # even orders vanish at t = 1/2; there the oracle only produces noise
    floor = 1e-12 * np.max(np.abs(ref))
    assert np.all(np.abs(got - ref) <= 1e-4 * np.abs(ref) + floor)


@pytest.mark.parametrize("s", [1.2, 1.5, 1.8])
def test_bump_coefficients_against_mpmath_taylor(s):
    for t in [0.01, 0.1, 0.37, 0.5, 0.63, 0.9, 0.99]:
        with mp.workdps(40):
            ref = mp.taylor(lambda x: mp_bump(s, x), mp.mpf(t), 15)
        got = bump_jet(s, t, 15).coeffs
        scale = max(abs(float(v)) for v in ref) or 1.0
        assert np.max(np.abs(got - np.array([float(v) for v in ref]))) <= 1e-11 * scale


@given(st.floats(min_value=1e-4, max_value=1 - 1e-4), st.floats(min_value=1.05, max_value=1.95))
@settings(max_examples=200, deadline=None)
def test_bump_symmetry(t, s):
    assert abs(bump_jet(s, t, 0).value + bump_jet(s, 1 - t, 0).value - 1.0) <= 1e-14


@given(st.floats(min_value=1e-4, max_value=1 - 1e-4), st.floats(min_value=1.05, max_value=1.95))
@settings(max_examples=100, deadline=None)
def test_bump_value_between_zero_and_one(t, s):
    v = bump_jet(s, t, 0).value
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(float(mp_bump(s, mp.mpf(t))), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("s", [1.2, 1.5, 1.9])
def test_bump_endpoints_exact(s):
    a = bump_jet(s, 0.0, 12).derivatives()
    b = bump_jet(s, 1.0, 12).derivatives()
    assert a[0] == 1.0 and np.all(a[1:] == 0.0)
    assert np.all(b == 0.0)


def test_bump_clamp_is_negligible():
    # just inside the clamp the exact step differs from 1 by exp(-1e6)
    assert bump(1.5, 1e-3 - 1e-12) == 1.0
    assert bump(1.5, 1 - 1e-3 + 1e-12) == 0.0


# --- Leibniz ------------------------------------------------------------------------

def test_leibniz_with_unit_jet():
    Y = np.array([3.0, -1.0, 2.0, 5.0])
    assert np.array_equal(leibniz_derivatives(Jet.constant(1.0, 0.0, 3), Y), Y)


def test_leibniz_with_constant_flat_output():
    phi = bump_jet(1.5, 0.4, 6)
    Y = np.zeros(7)
    Y[0] = 1.0
    assert np.allclose(leibniz_derivatives(phi, Y), phi.derivatives(), rtol=1e-14)


def test_leibniz_exponentials():
    e = Jet.from_derivatives(0.0, np.ones(11))
    assert np.allclose(leibniz_derivatives(e, np.ones(11)), 2.0 ** np.arange(11), rtol=1e-13)


def test_leibniz_length_mismatch():
    with pytest.raises(MismatchError):
        leibniz_derivatives(Jet.constant(1.0, 0.0, 3), np.ones(5))


def test_leibniz_agrees_with_cauchy_product():
    a = bump_jet(1.5, 0.3, 12)
    b = Jet(0.3, np.random.default_rng(1).normal(size=13))
    via_leibniz = leibniz_derivatives(a, b.derivatives())
    assert np.allclose(via_leibniz, jet_mul(a, b).derivatives(), rtol=1e-12)


# --- Gevrey growth --------------------------------------------------------------

def sup_derivatives(s, n=20):
    ts = np.linspace(0.02, 0.98, 97)
    return np.max(np.abs([bump_jet(s, t, n).derivatives() for t in ts]), axis=0)


@pytest.mark.parametrize("s", [1.3, 1.5, 1.7])
def test_fixed_exponent_envelope_covers_data(s):
    sup = sup_derivatives(s)
    fit = fit_gevrey(np.log(sup), s=s)
    n = np.arange(sup.size)
    env = np.log(fit.M) + s * np.array([math.lgamma(k + 1) for k in n]) - n * np.log(fit.R)
    assert np.all(np.log(sup) <= env + 1e-9)
    assert fit.residual >= 0


PRE_ASYMPTOTIC = pytest.mark.xfail(
    strict=True, reason="growth up to order 20 is pre-asymptotic; the free fit returns an "
                        "exponent near 1.0 for s = 1.3 and 1.5")


@pytest.mark.parametrize("s", [pytest.param(1.3, marks=PRE_ASYMPTOTIC),
                               pytest.param(1.5, marks=PRE_ASYMPTOTIC), 1.7])
def test_fitted_gevrey_exponent(s):
    fit = fit_gevrey(np.log(sup_derivatives(s)))
    assert abs(fit.s - s) <= 0.2
