"""Real special functions: Gamma, Bessel J of real order, and Bessel zeros.

Everything here is written against plain numpy so the rest of the package
can evaluate eigenfunctions on large quadrature grids without a compiled
special-function library.

Regimes for J_nu(z):

* ``z <= SERIES_MAX`` -- ascending series with Neumaier summation.
* ``SERIES_MAX < z < hankel_switch(nu)`` -- Miller backward recurrence,
  normalised with the Neumann sum ``(z/2)^nu = sum_k (nu+2k) Gamma(nu+k)/k! J_{nu+2k}``.
* ``z >= hankel_switch(nu)`` -- Hankel large-argument expansion; the switch
  is 25 + |nu| unless the omitted terms need a larger argument (nu >~ 10).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

# Lanczos approximation, g = 7, n = 9 (Godfrey's coefficients).
LANCZOS_G = 7.0
LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

SERIES_MAX = 12.0
HANKEL_BASE = 25.0
HANKEL_CORRECTIONS = 6
SERIES_RTOL = 1e-18


def _lgamma_lanczos(x):
    # valid for x >= 0.5
    x = np.asarray(x, dtype=float) - 1.0
    a = np.full_like(x, LANCZOS_COEFFS[0])
    for i, c in enumerate(LANCZOS_COEFFS[1:], start=1):
        a = a + c / (x + i)
    t = x + LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (x + 0.5) * np.log(t) - t + np.log(a)


def _sinpi(x):
    """sin(pi x) with the argument reduced exactly near integers."""
    n = np.round(x)
    r = x - n
    sign = np.where(np.mod(n, 2.0) == 0.0, 1.0, -1.0)
    return sign * np.sin(np.pi * r)


def _is_pole(x):
    x = np.asarray(x, dtype=float)
    return (x <= 0) & (x == np.round(x))


# exact factorials for positive integer arguments up to 171
_LOG_FACTORIAL = np.array([math.log(float(math.factorial(n))) for n in range(171)])


def log_gamma(x):
    """log|Gamma(x)| for real x that is not a non-positive integer."""
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(_is_pole(xa)):
        raise DomainError("log_gamma: argument is a pole or not finite")
    out = np.empty_like(xa)
    big = xa >= 0.5
    out[big] = _lgamma_lanczos(xa[big])
    exact = (xa >= 1) & (xa <= 171) & (xa == np.round(xa))
    if np.any(exact):
        out[exact] = _LOG_FACTORIAL[xa[exact].astype(int) - 1]
    small = ~big
    if np.any(small):
        xs = xa[small]
        out[small] = (math.log(math.pi) - np.log(np.abs(_sinpi(xs)))
                      - _lgamma_lanczos(1.0 - xs))
    return float(out) if np.ndim(x) == 0 else out


def gamma_sign(x):
    xa = np.asarray(x, dtype=float)
    s = np.where(xa > 0, 1.0, np.where(np.mod(np.floor(xa), 2.0) == 0.0, 1.0, -1.0))
    return float(s) if np.ndim(x) == 0 else s


def gamma(p):
    """Gamma(p) for 0 < p <= ~171, via the log-Gamma kernel."""
    pa = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(pa)) or np.any(pa <= 0):
        raise DomainError("gamma: argument must be positive and finite")
    out = np.exp(log_gamma(pa))
    return float(out) if np.ndim(p) == 0 else out


def rgamma(x):
    """1/Gamma(x), zero at the poles."""
    xa = np.asarray(x, dtype=float)
    out = np.zeros_like(xa)
    ok = ~_is_pole(xa)
    if np.any(ok):
        out[ok] = gamma_sign(xa[ok]) * np.exp(-log_gamma(xa[ok]))
    return float(out) if np.ndim(x) == 0 else out


# --- Bessel J ---------------------------------------------------------------

def _jv_series(order, z, scaled=False):
    h = 0.5 * z
    q = -(h * h)
    if scaled:
        t = np.full_like(z, rgamma(order + 1.0))
    else:
        with np.errstate(divide="ignore"):
            t = np.power(h, order) * rgamma(order + 1.0)
    s = t.copy()
    comp = np.zeros_like(s)
    for n in range(1, 400):
        t = t * q / (n * (n + order))
        y = s + t
        # Neumaier compensation
        comp += np.where(np.abs(s) >= np.abs(t), (s - y) + t, (t - y) + s)
        s = y
        if n > -order and np.all(np.abs(t) <= SERIES_RTOL * np.abs(s)):
            break
    return s + comp


@functools.lru_cache(maxsize=256)
def _miller_coeffs(order, kmax):
    # c_0 = Gamma(order+1), c_k = (order+2k) Gamma(order+k) / k!, returned
    # divided by their largest magnitude together with its logarithm
    k = np.arange(1, kmax + 1, dtype=float)
    logc = np.empty(kmax + 1)
    sign = np.empty(kmax + 1)
    logc[0] = log_gamma(order + 1.0)
    sign[0] = gamma_sign(order + 1.0)
    lg_k = np.array([math.lgamma(v + 1.0) for v in k])
    with np.errstate(divide="ignore"):
        logc[1:] = np.log(np.abs(order + 2.0 * k)) + log_gamma(order + k) - lg_k
    sign[1:] = np.sign(order + 2.0 * k) * gamma_sign(order + k)
    top = float(np.max(logc))
    c = sign * np.exp(logc - top)
    c.setflags(write=False)
    return c, top


def _jv_miller(order, z):
    m0 = int(math.ceil(1.3 * float(np.max(z)) + 40.0))
    m0 += m0 % 2
    c, log_top = _miller_coeffs(order, m0 // 2)
    f_next = np.zeros_like(z)
    f_cur = np.full_like(z, 1e-30)
    norm = c[m0 // 2] * f_cur
    for m in range(m0, 0, -1):
        f_prev = (2.0 * (order + m) / z) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        if (m - 1) % 2 == 0:
            norm = norm + c[(m - 1) // 2] * f_cur
        big = np.abs(f_cur) > 1e150
        if np.any(big):
            scale = np.where(big, 1e-150, 1.0)
            f_cur *= scale
            f_next *= scale
            norm *= scale
    with np.errstate(divide="ignore"):
        mag = np.log(np.abs(f_cur)) - np.log(np.abs(norm)) + order * np.log(0.5 * z) - log_top
    return np.sign(f_cur) * np.sign(norm) * np.exp(mag)


def _jv_hankel(order, z):
    mu = 4.0 * order * order
    a = np.ones_like(z)
    p = np.ones_like(z)
    q = np.zeros_like(z)
    for k in range(1, 2 * HANKEL_CORRECTIONS + 2):
        a = a * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            p = p + sign * a
        else:
            q = q + (1.0 if ((k - 1) // 2) % 2 == 0 else -1.0) * a
    chi = z - (0.5 * order + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


HANKEL_TERM_TOL = 1e-14


@functools.lru_cache(maxsize=256)
def hankel_switch(order):
    """Start of the Hankel regime: at least 25 + |order|, and far enough out
    that the first omitted correction term is below 1e-14."""
    mu = 4.0 * order * order
    m = 2 * HANKEL_CORRECTIONS + 2

    def last_term(z):
        a = 1.0
        for k in range(1, m + 1):
            a *= abs(mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        return a

    z = HANKEL_BASE + abs(order)
    while last_term(z) > HANKEL_TERM_TOL:
        z *= 1.25
    return z


def _jv(order, z):
    """J_order(z) for any real order and z > 0 (z = 0 allowed for order >= 0)."""
    order = float(order)
    z = np.asarray(z, dtype=float)
    if order < 0 and order == round(order):
        n = int(-order)
        return (-1.0) ** n * _jv(float(n), z)
    out = np.empty_like(z)
    zs = z <= SERIES_MAX
    zh = z >= hankel_switch(order)
    zm = ~(zs | zh)
    if np.any(zs):
        out[zs] = _jv_series(order, z[zs])
    if np.any(zm):
        out[zm] = _jv_miller(order, z[zm])
    if np.any(zh):
        out[zh] = _jv_hankel(order, z[zh])
    return out


def _check_order(nu):
    if not math.isfinite(nu) or nu < 0:
        raise DomainError(f"Bessel order must be a finite nonnegative real, got {nu}")


def bessel_j(nu, z):
    """Bessel function of the first kind J_nu(z), nu >= 0, z >= 0."""
    nu = float(nu)
    _check_order(nu)
    za = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(za)) or np.any(za < 0):
        raise DomainError("bessel_j: z must be finite and nonnegative")
    out = _jv(nu, np.atleast_1d(za))
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(za.shape)


def bessel_j_scaled(nu, z):
    """J_nu(z) / (z/2)^nu, an entire function equal to 1/Gamma(nu+1) at z = 0.

    Useful where J_nu(z) itself would underflow, as near the degenerate end
    of the eigenfunctions.
    """
    nu = float(nu)
    _check_order(nu)
    za = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(za)) or np.any(za < 0):
        raise DomainError("bessel_j_scaled: z must be finite and nonnegative")
    z1 = np.atleast_1d(za)
    out = np.empty_like(z1)
    small = z1 <= SERIES_MAX
    out[small] = _jv_series(nu, z1[small], scaled=True)
    big = ~small
    out[big] = _jv(nu, z1[big]) / np.power(0.5 * z1[big], nu)
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(za.shape)


def bessel_j_prime(nu, z):
    """dJ_nu/dz from 2 J'_nu = J_{nu-1} - J_{nu+1}, z > 0."""
    nu = float(nu)
    _check_order(nu)
    za = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(za)) or np.any(za <= 0):
        raise DomainError("bessel_j_prime: z must be finite and positive")
    z1 = np.atleast_1d(za)
    out = 0.5 * (_jv(nu - 1.0, z1) - _jv(nu + 1.0, z1))
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(za.shape)


# --- zeros ------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroTable:
    """First ``count`` positive zeros of J_nu, strictly increasing."""

    nu: float
    zeros: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.zeros, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "zeros", z)
        if z.ndim != 1 or z.size < 1:
            raise ValueError("ZeroTable needs at least one zero")
        if not z[0] > self.nu:
            raise ValueError("first zero must exceed the order")
        if np.any(np.diff(z) <= 0):
            raise ValueError("zeros must be strictly increasing")

    @property
    def count(self):
        return self.zeros.size

    def __len__(self):
        return self.zeros.size

    def __getitem__(self, i):
        return self.zeros[i]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("k,zero\n")
            for k, z in enumerate(self.zeros, start=1):
                fh.write(f"{k},{z:.17g}\n")


def mcmahon_guess(nu, k):
    """McMahon's large-k approximation to the k-th zero of J_nu."""
    beta = (np.asarray(k, dtype=float) + 0.5 * nu - 0.25) * math.pi
    mu = 4.0 * nu * nu
    b8 = 8.0 * beta
    return beta - (mu - 1.0) / b8 - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8 ** 3)


# Consecutive zeros of J_nu (nu >= 0) are never closer than j_{0,2} - j_{0,1} ~ 3.11,
# so a scan with step 1 sees exactly one sign change per zero.
_SCAN_STEP = 1.0


def _brackets(nu, count):
    lo = nu
    hi = float(mcmahon_guess(nu, count)) + 2.0 * math.pi
    while True:
        grid = np.arange(lo, hi + _SCAN_STEP, _SCAN_STEP)
        vals = _jv(nu, grid)
        idx = np.nonzero(vals[:-1] * vals[1:] < 0)[0]
        exact = np.nonzero(vals == 0)[0]
        if exact.size:
            grid = grid + 1e-3 * _SCAN_STEP  # step off an exact grid zero
            lo += 1e-3 * _SCAN_STEP
            continue
        if idx.size >= count:
            idx = idx[:count]
            return grid[idx], grid[idx + 1]
        hi += count * math.pi


def bessel_zeros(nu, count):
    """First ``count`` positive zeros of J_nu.

    Each zero is bracketed by a sign-change scan, seeded with McMahon's
    estimate when that lies inside the bracket, and refined by Newton steps
    that fall back to bisection whenever they leave the bracket.
    """
    nu = float(nu)
    _check_order(nu)
    count = int(count)
    if count < 1:
        raise DomainError("bessel_zeros: count must be >= 1")
    a, b = _brackets(nu, count)
    fa = _jv(nu, a)
    guess = mcmahon_guess(nu, np.arange(1, count + 1))
    x = np.where((guess > a) & (guess < b), guess, 0.5 * (a + b))
    for _ in range(100):
        fx = _jv(nu, x)
        dfx = 0.5 * (_jv(nu - 1.0, x) - _jv(nu + 1.0, x))
        same = np.sign(fx) == np.sign(fa)
        a = np.where(same, x, a)
        fa = np.where(same, fx, fa)
        b = np.where(same, b, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - fx / dfx
        tiny = np.abs(xn - x) <= 4e-16 * x
        ok = np.isfinite(xn) & (((xn > a) & (xn < b)) | tiny)
        xn = np.where(ok, xn, 0.5 * (a + b))
        step = np.abs(xn - x)
        x = xn
        if np.all(step <= 4e-16 * x):
            break
    else:
        raise ConvergenceError(f"bessel_zeros(nu={nu}): Newton iteration did not settle")

    eps = 1e-9 * x
    left, right = _jv(nu, x - eps), _jv(nu, x + eps)
    resid = np.abs(_jv(nu, x))
    if np.any(left * right > 0) or np.any(resid > 1e-11):
        raise ConvergenceError(f"bessel_zeros(nu={nu}): refined zero lost its sign change")
    # interlacing with J_{nu+1}: J_{nu+1}(j_{nu,k}) = -J'_nu(j_{nu,k}) alternates in sign
    s = np.sign(_jv(nu + 1.0, x))
    expected = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
    assert np.all(s == expected), "zeros of J_nu and J_{nu+1} fail to interlace"
    assert np.all(np.diff(x) > 0) and x[0] > nu
    return ZeroTable(nu=nu, zeros=x)
