import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degflat.errors import DomainError
from degflat.specfun import (ZeroTable, _jv, bessel_j, bessel_j_prime, bessel_j_scaled,
                             bessel_zeros, gamma, hankel_switch, log_gamma, mcmahon_guess)


def gauss_legendre(f, a, b, n=200):
    x, w = np.polynomial.legendre.leggauss(n)
    xm = 0.5 * (b - a) * x + 0.5 * (b + a)
    return 0.5 * (b - a) * np.sum(w * f(xm))


# --- Gamma ------------------------------------------------------------------------

def test_gamma_small_integers():
    assert gamma(1) == pytest.approx(1.0, rel=1e-14)
    assert gamma(5) == pytest.approx(24.0, rel=1e-14)


def test_gamma_half_against_quadrature():
    # Gamma(1/2) = int_0^inf t^(-1/2) e^(-t) dt = 2 int_0^inf e^(-s^2) ds
    ref = 2.0 * float(mp.quad(lambda s: mp.exp(-s * s), [0, mp.inf]))
    assert gamma(0.5) == pytest.approx(ref, rel=1e-13)
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)


@pytest.mark.parametrize("p", [0.0, -1.0, -0.5, math.inf, math.nan])
def test_gamma_domain(p):
    with pytest.raises(DomainError):
        gamma(p)


def test_gamma_recurrence():
    x = 0.1 * np.arange(1, 501)
    g1 = np.array([gamma(v + 1.0) for v in x])
    g0 = np.array([gamma(v) for v in x])
    assert np.max(np.abs(g1 - x * g0) / g1) <= 1e-12


@given(st.floats(min_value=1e-3, max_value=170.0))
@settings(max_examples=200, deadline=None)
def test_gamma_matches_mpmath(p):
    assert gamma(p) == pytest.approx(float(mp.gamma(p)), rel=1e-12)


def test_log_gamma_reflection_side():
    for x in [-0.5, -1.5, -2.25, -7.3]:
        assert log_gamma(x) == pytest.approx(float(mp.log(abs(mp.gamma(x)))), abs=1e-12)


@pytest.mark.parametrize("a,b", [(1.0, 0.5), (2.0, 1.0)])
def test_stirling_ratio(a, b):
    x = 50.0
    ax = a * x
    log_ref = 0.5 * math.log(2 * math.pi) - ax + (ax + b - 0.5) * math.log(ax)
    ratio = math.exp(log_gamma(ax + b) - log_ref)
    assert abs(ratio - 1.0) <= 1e-2


def test_factorial_bound_exact():
    for n in range(31):
        for k in range(31):
            assert math.factorial(n + k) <= 2 ** (n + k) * math.factorial(n) * math.factorial(k)


# --- Bessel J ---------------------------------------------------------------------

def test_bessel_at_zero():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(2, 0.0) == 0.0


def test_bessel_first_zero_value():
    assert abs(bessel_j(0, 2.404825557695773)) <= 1e-10


def test_bessel_domain():
    with pytest.raises(DomainError):
        bessel_j(0, -1.0)
    with pytest.raises(DomainError):
        bessel_j(-0.5, 1.0)
    with pytest.raises(DomainError):
        bessel_j_prime(1.0, 0.0)


@pytest.mark.parametrize("nu", [0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 9.0, 20.0, 99.0])
def test_bessel_matches_mpmath(nu):
    z = np.concatenate([np.linspace(0.0, 40.0, 161), np.geomspace(40.0, 1000.0, 60)])
    ref = np.array([float(mp.besselj(nu, v)) for v in z])
    assert np.max(np.abs(bessel_j(nu, z) - ref)) <= 1e-11


def test_regimes_join_continuously():
    for nu in [0.0, 1.0, 9.0]:
        for z0 in [12.0, hankel_switch(nu)]:
            h = 1e-9
            left, right = bessel_j(nu, z0 - h), bessel_j(nu, z0 + h)
            assert abs(right - left - 2 * h * bessel_j_prime(nu, z0)) <= 1e-11


def test_scaled_bessel_limit():
    assert bessel_j_scaled(9.0, 0.0) == pytest.approx(1.0 / math.factorial(9), rel=1e-13)
    z = np.array([0.5, 5.0, 20.0])
    assert np.allclose(bessel_j_scaled(1.0, z), bessel_j(1.0, z) / (z / 2), rtol=1e-12)


def test_derivative_small_argument():
    assert abs(bessel_j_prime(0, 1e-8)) <= 1e-7


def test_derivative_at_first_zero():
    # finite-difference oracle on bessel_j
    z, h = 2.404825557695773, 1e-5
    fd = (bessel_j(0, z + h) - bessel_j(0, z - h)) / (2 * h)
    assert bessel_j_prime(0, z) == pytest.approx(fd, rel=1e-8)
    assert bessel_j_prime(0, z) == pytest.approx(-0.5191474973, abs=1e-9)


@pytest.mark.parametrize("nu", [0.0, 0.3, 1.0, 2.5, 9.0])
def test_derivative_matches_finite_differences(nu):
    z = np.linspace(0.5, 100.0, 200)
    h = 1e-3
    # fourth-order central stencil
    fd = (8 * (bessel_j(nu, z + h) - bessel_j(nu, z - h))
          - (bessel_j(nu, z + 2 * h) - bessel_j(nu, z - 2 * h))) / (12 * h)
    d = bessel_j_prime(nu, z)
    scale = np.maximum(np.abs(d), 1e-3)
    assert np.max(np.abs(d - fd) / scale) <= 1e-7


def _ode_residual(nu, z, plus=False):
    j = _jv(nu, z)
    d1 = 0.5 * (_jv(nu - 1, z) + (1 if plus else -1) * _jv(nu + 1, z))
    d2 = 0.25 * (_jv(nu - 2, z) - 2 * j + _jv(nu + 2, z))
    return z * z * d2 + z * d1 + (z * z - nu * nu) * j


def test_ode_residual_single_point():
    assert abs(_ode_residual(1.0, np.array([3.0]))[0]) <= 1e-9


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.0, 3.0])
def test_ode_residual_log_grid(nu):
    z = np.geomspace(0.1, 500.0, 400)
    assert np.max(np.abs(_ode_residual(nu, z))) <= 1e-9


def test_derivative_relation_sign():
    # The relation 2J' = J_{nu-1} + J_{nu+1} does not satisfy Bessel's
    # equation; only the minus sign does.
    z = np.geomspace(0.1, 50.0, 50)
    assert np.max(np.abs(_ode_residual(1.0, z, plus=True))) > 1.0
    assert np.max(np.abs(_ode_residual(1.0, z))) <= 1e-9


# --- zeros ------------------------------------------------------------------------

def test_first_zeros_order_zero():
    zt = bessel_zeros(0, 3)
    assert np.allclose(zt.zeros, [2.4048255577, 5.5200781103, 8.6537279129], atol=1e-9)


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.0, 9.0])
def test_zeros_are_roots(nu):
    zt = bessel_zeros(nu, 60)
    assert np.max(np.abs(bessel_j(nu, zt.zeros))) <= 1e-11
    ref = [float(mp.besseljzero(nu, k)) for k in (1, 2, 10, 60)]
    assert np.allclose(zt.zeros[[0, 1, 9, 59]], ref, rtol=1e-12)


def test_zero_gap_tends_to_pi():
    z = bessel_zeros(0, 101).zeros
    assert abs(z[100] - z[99] - math.pi) <= 1e-3


def test_zeros_exceed_order():
    assert np.all(bessel_zeros(2, 20).zeros > 2)


@pytest.mark.parametrize("nu", [0.0, 1.0, 9.0, 3.7])
def test_zeros_interlace(nu):
    a = bessel_zeros(nu, 30).zeros
    b = bessel_zeros(nu + 1, 30).zeros
    assert np.all(np.diff(a) > 0)
    assert np.all(a[:-1] < b[:-1]) and np.all(b[:-1] < a[1:])


def test_mcmahon_guess_is_close_for_large_index():
    assert abs(mcmahon_guess(0.0, 50) - bessel_zeros(0.0, 50).zeros[-1]) < 1e-3


def test_zero_table_validation(tmp_path):
    with pytest.raises(ValueError):
        ZeroTable(1.0, np.array([0.5, 4.0]))
    with pytest.raises(ValueError):
        ZeroTable(0.0, np.array([3.0, 2.0]))
    zt = bessel_zeros(0, 4)
    path = tmp_path / "z.csv"
    zt.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "k,zero" and len(rows) == 5
    assert float(rows[1].split(",")[1]) == zt.zeros[0]


@pytest.mark.parametrize("nu", [0.0, 1.0, 2.5])
def test_orthogonality(nu):
    z = bessel_zeros(nu, 10).zeros
    jn = bessel_j(nu + 1, z)
    G = np.empty((10, 10))
    for n in range(10):
        for m in range(10):
            G[n, m] = gauss_legendre(lambda y: y * bessel_j(nu, z[n] * y) * bessel_j(nu, z[m] * y),
                                     0.0, 1.0)
    assert np.max(np.abs(G - np.diag(0.5 * jn ** 2))) <= 1e-9


def test_normalisation_limit():
    for nu in [0.0, 1.0, 9.0]:
        j = bessel_zeros(nu, 200).zeros[-1]
        val = math.sqrt(j) * abs(bessel_j(nu + 1, j))
        assert abs(val - math.sqrt(2 / math.pi)) <= 5e-3
