"""Series solution, boundary control and its assembly from the flat output.

For a flat output y(t) the series

    f(t, x) = sum_k y^(k)(t) w^(2k) / d_k,   w = x^(1-alpha/2),
    d_k = (2-alpha)^(2k) k! prod_{j<=k}(j + nu),

solves the degenerate heat equation with the weighted flux condition at 0,
and u(t) = f(t, 1) is the control.  Derivative stacks are carried as Taylor
coefficients y^(k)/k! so that numerators and denominators meet in log space.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridError, MismatchError, NumericalError
from .jets import DEFAULT_ORDER, Jet, bump_jet, fit_gevrey, jet_affine_compose, jet_mul, GevreyFit
from .spectral import flat_output_derivs
from .specfun import log_gamma


@dataclass(frozen=True)
class SeriesDenominators:
    params: object
    log_d: np.ndarray

    @property
    def N(self):
        return self.log_d.size - 1


def denominators(params, N=DEFAULT_ORDER):
    if N < 0:
        raise DomainError("series order must be nonnegative")
    nu = params.nu
    k = np.arange(N + 1, dtype=float)
    log_d = (2.0 * k * math.log(2.0 - params.alpha) + log_gamma(k + 1.0)
             + log_gamma(k + nu + 1.0) - log_gamma(nu + 1.0))
    log_d[0] = 0.0
    log_d.setflags(write=False)
    return SeriesDenominators(params, log_d)


def _log_terms(y, den, taylor):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != den.N + 1:
        raise MismatchError(f"expected {den.N + 1} derivatives, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite derivative in flat output stack")
    k = np.arange(y.size, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(y)) - den.log_d
    if taylor:
        logs = logs + log_gamma(k + 1.0)
    return np.sign(y), logs


def solution_value(y_derivs, den, x, taylor=False):
    """Series f(t, x) = sum_k y^(k) w^(2k) / d_k at points x in [0, 1].

    ``y_derivs`` are derivatives y^(0..N)(t), or Taylor coefficients
    y^(k)/k! when ``taylor`` is set.
    """
    sign, logs = _log_terms(y_derivs, den, taylor)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > 1):
        raise DomainError("x must lie in [0, 1]")
    x1 = np.atleast_1d(xa).ravel()
    k = np.arange(sign.size, dtype=float)
    with np.errstate(divide="ignore"):
        lw2 = 2.0 * den.params.kappa * np.log(x1)
    # k * log(w^2) with the k = 0 term kept at w^0 = 1 even at x = 0
    shift = np.where(k[None, :] == 0, 0.0, k[None, :] * lw2[:, None])
    terms = sign[None, :] * np.exp(logs[None, :] + shift)
    vals = np.array([math.fsum(r) for r in terms])
    return float(vals[0]) if xa.ndim == 0 else vals.reshape(xa.shape)


def control_value(y_derivs, den, taylor=False):
    """Boundary control u = sum_k y^(k) / d_k, the series at x = 1."""
    return solution_value(y_derivs, den, 1.0, taylor=taylor)


def pde_residual(y_derivs, den, x, taylor=False):
    """d_t f - (x^alpha f_x)_x for the truncated series, term by term.

    Needs y^(0..N+1) for a series of order N (``den``).  Both operators are
    applied to each monomial w^(2k) analytically; by the recurrence between
    consecutive d_k the result is the single term y^(N+1) w^(2N) / d_N.
    """
    y = np.asarray(y_derivs, dtype=float)
    N = den.N
    if y.size != N + 2:
        raise MismatchError(f"expected {N + 2} derivatives, got {y.size}")
    if taylor:
        y = y * np.exp(log_gamma(np.arange(N + 2) + 1.0))
    p = den.params
    beta = 2.0 - p.alpha
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    w2 = xa ** (2.0 * p.kappa)
    d = np.exp(den.log_d)
    dt_f = sum(y[k + 1] * w2 ** k / d[k] for k in range(N + 1))
    # (x^alpha (x^(beta k))')' = beta k (beta k + alpha - 1) x^(beta (k-1))
    op_f = sum(y[k] * beta * k * (beta * k + p.alpha - 1.0) * w2 ** (k - 1) / d[k]
               for k in range(1, N + 1))
    res = dt_f - op_f
    return float(res[0]) if np.ndim(x) == 0 else res


# --- Gevrey bounds --------------------------------------------------------------

def _log_sum_power_factorial(logq, beta):
    # log sum_{k>=0} q^k / (k!)^beta, summed over the window around the peak
    peak = math.exp(logq / beta) if logq > 0 else 0.0
    width = 20.0 * math.sqrt(peak / beta + 1.0) + 200.0
    lo, hi = max(0, int(peak - width)), int(peak + width) + 1
    k = np.arange(lo, hi, dtype=float)
    logs = k * logq - beta * log_gamma(k + 1.0)
    m = float(np.max(logs))
    return m + math.log(float(np.sum(np.exp(logs - m))))


def gevrey_control_bound(fit, alpha, n):
    """Envelope M (2^s/R)^n (n!)^s sum_k (2^s/(R(2-alpha)^2))^k / (k!)^(2-s).

    This is the derivative bound for u implied by |y^(n)| <= M (n!)^s / R^n;
    returns its logarithm.
    """
    s = fit.s
    logq = s * math.log(2.0) - math.log(fit.R) - 2.0 * math.log(2.0 - alpha)
    return (math.log(fit.M) + n * (s * math.log(2.0) - math.log(fit.R))
            + s * math.lgamma(n + 1.0) + _log_sum_power_factorial(logq, 2.0 - s))


def series_tail_bound(fit, den, extra=400):
    """Bound sum_{k>N} M (k!)^s R^-k / d_k on the omitted series terms."""
    p = den.params
    N = den.N
    k = np.arange(N + 1, N + 1 + extra, dtype=float)
    log_d = (2.0 * k * math.log(2.0 - p.alpha) + log_gamma(k + 1.0)
             + log_gamma(k + p.nu + 1.0) - log_gamma(p.nu + 1.0))
    logs = math.log(fit.M) + fit.s * log_gamma(k + 1.0) - k * math.log(fit.R) - log_d
    m = float(np.max(logs))
    return math.exp(min(m + math.log(float(np.sum(np.exp(logs - m)))), 700.0))


# --- assembly -------------------------------------------------------------------

class FlatControl:
    """The control u(t) and its flat output, evaluable at any time."""

    def __init__(self, basis, coeffs, params, N=DEFAULT_ORDER):
        if N < 0:
            raise DomainError("series order must be nonnegative")
        self.basis = basis
        self.coeffs = coeffs
        self.params = params
        self.N = N
        self.den = denominators(params, N)

    def flat_taylor(self, t, order=None):
        """Taylor coefficients y^(k)(t)/k! of y = phi_s((t-tau)/(T-tau)) Y(t).

        Returns None on [0, tau], where y is not needed (u is zero there).
        """
        p = self.params
        N = self.N if order is None else order
        t = float(t)
        if t <= p.tau:
            return None
        if t >= p.T:
            return np.zeros(N + 1)
        span = p.T - p.tau
        phi = bump_jet(p.s, (t - p.tau) / span, N)
        # jet in t: coefficients pick up (T - tau)^-n
        phi_t = jet_affine_compose((1.0 / span, -p.tau / span), phi)
        if not np.any(phi_t.coeffs):
            return np.zeros(N + 1)
        ytay = flat_output_derivs(self.basis, self.coeffs, t, N, taylor=True)
        return jet_mul(phi_t, Jet(phi_t.center, ytay)).coeffs.copy()

    def value(self, t):
        y = self.flat_taylor(t)
        if y is None:
            return 0.0
        return control_value(y, self.den, taylor=True)

    def __call__(self, t):
        ta = np.asarray(t, dtype=float)
        vals = np.array([self.value(v) for v in np.atleast_1d(ta).ravel()])
        return float(vals[0]) if ta.ndim == 0 else vals.reshape(ta.shape)


@dataclass(frozen=True)
class ControlSignal:
    times: np.ndarray
    u: np.ndarray
    y_taylor: np.ndarray
    gevrey_fit: GevreyFit
    tail_bound: float
    N: int
    K: int

    @property
    def y_stack(self):
        """Derivatives y^(n)(t) per sample, NaN on [0, tau]."""
        n = np.arange(self.N + 1, dtype=float)
        with np.errstate(over="ignore"):
            return self.y_taylor * np.exp(log_gamma(n + 1.0))[None, :]


def _on_grid(times, value, tol):
    return bool(np.any(np.abs(times - value) <= tol))


def time_grid(params, dt):
    """Uniform-ish grid on [0, T] with tau and T as exact nodes."""
    if not dt > 0:
        raise DomainError("time step must be positive")
    n1 = max(1, int(math.ceil(params.tau / dt - 1e-9)))
    n2 = max(1, int(math.ceil((params.T - params.tau) / dt - 1e-9)))
    first = np.linspace(0.0, params.tau, n1 + 1)
    second = np.linspace(params.tau, params.T, n2 + 1)
    return np.concatenate([first, second[1:]])


def assemble_control(basis, coeffs, params, N=DEFAULT_ORDER, times=None, dt=None):
    """Sample the control on a grid of [0, T] that contains tau and T."""
    if times is None:
        if dt is None:
            raise GridError("give a time grid or a step")
        times = time_grid(params, dt)
    times = np.asarray(times, dtype=float)
    tol = 1e-12 * params.T
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise GridError("time grid must be strictly increasing")
    if abs(times[0]) > tol or abs(times[-1] - params.T) > tol:
        raise GridError("time grid must cover [0, T]")
    if not _on_grid(times, params.tau, tol):
        raise GridError("time grid must contain the waiting time tau")
    flat = FlatControl(basis, coeffs, params, N)
    u = np.zeros(times.size)
    ytay = np.full((times.size, N + 1), np.nan)
    for i, t in enumerate(times):
        y = flat.flat_taylor(t)
        if y is None:
            continue
        ytay[i] = y
        u[i] = control_value(y, flat.den, taylor=True)
    fit = fit_control_gevrey(ytay, params.s)
    tail = series_tail_bound(fit, flat.den) if fit.M > 0 else 0.0
    ytay.setflags(write=False)
    u.setflags(write=False)
    times = times.copy()
    times.setflags(write=False)
    return ControlSignal(times, u, ytay, fit, tail, N, basis.K)


def fit_control_gevrey(y_taylor, s):
    """Fit (M, R) with the exponent fixed to s on sup_t |y^(n)(t)|."""
    active = y_taylor[np.all(np.isfinite(y_taylor), axis=1)]
    if active.size == 0:
        return GevreyFit(0.0, 1.0, s, 0.0)
    sup = np.max(np.abs(active), axis=0)
    if not np.any(sup > 0):
        return GevreyFit(0.0, 1.0, s, 0.0)
    n = np.arange(sup.size, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(sup) + log_gamma(n + 1.0)
    return fit_gevrey(logs, s=s)


# --- export ---------------------------------------------------------------------

def fmt(v):
    return f"{float(v):.17g}"


def write_control_csv(control, path):
    with open(path, "w", newline="") as fh:
        fh.write("t,u\n")
        for t, u in zip(control.times, control.u):
            fh.write(f"{fmt(t)},{fmt(u)}\n")


def control_metadata(control):
    fit = control.gevrey_fit
    return {
        "gevrey_M": float(fit.M),
        "gevrey_R": float(fit.R),
        "gevrey_s": float(fit.s),
        "gevrey_fit_residual": float(fit.residual),
        "N": int(control.N),
        "K": int(control.K),
        "series_tail_bound": float(control.tail_bound),
    }


def write_control_json(control, path):
    with open(path, "w") as fh:
        json.dump(control_metadata(control), fh, indent=2, sort_keys=True)
        fh.write("\n")
