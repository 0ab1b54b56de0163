"""Truncated Taylor series ("jets") and the Gevrey bump built from them.

A jet of order N at t0 stores c_n = g^(n)(t0)/n! for n = 0..N.  All the
arithmetic below is exact on truncated power series; nothing is
differentiated symbolically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, MismatchError, SingularityError

DEFAULT_ORDER = 30
# beyond this distance from 0 or 1 the bump differs from its one-sided
# constant by less than exp(-1/0.001) and is returned exactly
ENDPOINT_CLAMP = 1e-3


def _log_factorials(n):
    return np.array([math.lgamma(k + 1.0) for k in range(n + 1)])


@dataclass(frozen=True)
class Jet:
    center: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("jet coefficients must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("jet coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", float(self.center))

    @property
    def order(self):
        return self.coeffs.size - 1

    @property
    def value(self):
        return float(self.coeffs[0])

    @classmethod
    def constant(cls, c, center, order):
        coeffs = np.zeros(order + 1)
        coeffs[0] = c
        return cls(center, coeffs)

    @classmethod
    def variable(cls, center, order):
        """Jet of the identity map t -> t at ``center``."""
        coeffs = np.zeros(order + 1)
        coeffs[0] = center
        if order >= 1:
            coeffs[1] = 1.0
        return cls(center, coeffs)

    @classmethod
    def from_derivatives(cls, center, derivs):
        d = np.asarray(derivs, dtype=float)
        return cls(center, d * np.exp(-_log_factorials(d.size - 1)))

    def derivatives(self):
        """g^(n)(t0) = n! c_n; may overflow to inf for very high orders."""
        with np.errstate(over="ignore"):
            return self.coeffs * np.exp(_log_factorials(self.order))

    def __add__(self, other):
        return jet_add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return jet_scale(-1.0, self)

    def __sub__(self, other):
        return jet_add(self, -other)

    def __rsub__(self, other):
        return jet_add(-self, other)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, other)
        return jet_scale(other, self)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, jet_reciprocal(other))
        return jet_scale(1.0 / other, self)

    def __rtruediv__(self, other):
        return jet_scale(other, jet_reciprocal(self))


def _check_pair(a, b):
    if a.order != b.order:
        raise MismatchError(f"jet orders differ: {a.order} vs {b.order}")
    if a.center != b.center:
        raise MismatchError(f"jet centers differ: {a.center} vs {b.center}")


def jet_add(a, b):
    if isinstance(b, Jet):
        _check_pair(a, b)
        return Jet(a.center, a.coeffs + b.coeffs)
    c = a.coeffs.copy()
    c[0] += b
    return Jet(a.center, c)


def jet_scale(c, a):
    return Jet(a.center, c * a.coeffs)


def jet_mul(a, b):
    """Cauchy product truncated at the common order."""
    _check_pair(a, b)
    return Jet(a.center, np.convolve(a.coeffs, b.coeffs)[: a.order + 1])


def jet_exp(g):
    # (e^g)' = g' e^g  =>  n e_n = sum_{j=1..n} j g_j e_{n-j}
    n = g.order
    e = np.zeros(n + 1)
    e[0] = math.exp(g.coeffs[0])
    jg = np.arange(n + 1) * g.coeffs
    for m in range(1, n + 1):
        e[m] = np.dot(jg[1:m + 1], e[m - 1::-1]) / m
    return Jet(g.center, e)


def jet_reciprocal(g):
    c = g.coeffs
    if c[0] == 0.0:
        raise SingularityError("reciprocal of a jet with zero constant term")
    n = g.order
    r = np.zeros(n + 1)
    r[0] = 1.0 / c[0]
    for m in range(1, n + 1):
        r[m] = -np.dot(c[1:m + 1], r[m - 1::-1]) / c[0]
    return Jet(g.center, r)


def jet_log(g):
    # g (log g)' = g'  =>  n c_0 l_n = n g_n - sum_{j=1..n-1} j l_j g_{n-j}
    c = g.coeffs
    if not c[0] > 0.0:
        raise DomainError("log of a jet needs a positive constant term")
    n = g.order
    lg = np.zeros(n + 1)
    lg[0] = math.log(c[0])
    for m in range(1, n + 1):
        acc = m * c[m] - np.dot(np.arange(1, m) * lg[1:m], c[m - 1:0:-1])
        lg[m] = acc / (m * c[0])
    return Jet(g.center, lg)


def jet_pow(g, p):
    """g**p for a jet with positive constant term, as exp(p log g)."""
    return jet_exp(jet_scale(p, jet_log(g)))


def jet_affine_compose(affine, g):
    """Jet of t -> G(a t + b), given the jet ``g`` of G at r0.

    The result is centred at t0 = (r0 - b) / a and has coefficients a^n c_n.
    """
    a, b = affine
    a = float(a)
    powers = a ** np.arange(g.order + 1)
    return Jet((g.center - b) / a, g.coeffs * powers)


def bump_jet(s, t, N=DEFAULT_ORDER):
    """Jet at t of the Gevrey-s step that is 1 for t <= 0 and 0 for t >= 1.

    Inside (0, 1) the step equals 1 / (1 + exp(q)) with
    q(t) = (1-t)^(-p) - t^(-p), p = 1/(s-1); the two halves are evaluated in
    the form that keeps the exponential bounded.
    """
    s = float(s)
    if not 1.0 < s < 2.0:
        raise DomainError(f"Gevrey order must lie in (1, 2), got {s}")
    if N < 0:
        raise DomainError("jet order must be nonnegative")
    t = float(t)
    if t < ENDPOINT_CLAMP:
        return Jet.constant(1.0, t, N)
    if t > 1.0 - ENDPOINT_CLAMP:
        return Jet.constant(0.0, t, N)
    p = 1.0 / (s - 1.0)
    x = Jet.variable(t, N)
    q = jet_pow(1.0 - x, -p) - jet_pow(x, -p)
    if t <= 0.5:
        return jet_reciprocal(1.0 + jet_exp(q))
    e = jet_exp(-q)
    return jet_mul(e, jet_reciprocal(1.0 + e))


def bump(s, t):
    """Closed-form value of the Gevrey step, for oracles and plotting."""
    t = np.asarray(t, dtype=float)
    p = 1.0 / (s - 1.0)
    out = np.where(t <= 0, 1.0, 0.0)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    with np.errstate(over="ignore"):
        q = (1.0 - ti) ** (-p) - ti ** (-p)
        out[inside] = 0.5 * (1.0 - np.tanh(0.5 * q))
    return out


def leibniz_derivatives(phi, Y_derivs):
    """Derivatives of the product phi * Y from phi's jet and Y's derivatives.

    y^(n) = sum_i C(n, i) phi^(i) Y^(n-i), with the binomials and factorials
    combined in log space.
    """
    Y = np.asarray(Y_derivs, dtype=float)
    if Y.ndim != 1 or Y.size != phi.order + 1:
        raise MismatchError(
            f"derivative list has length {Y.size}, jet order is {phi.order}")
    n = phi.order
    lf = _log_factorials(n)
    c = phi.coeffs
    out = np.zeros(n + 1)
    for m in range(n + 1):
        i = np.arange(m + 1)
        # C(m,i) phi^(i) = m!/(m-i)! * c_i
        w = np.exp(lf[m] - lf[m - i])
        out[m] = np.sum(w * c[: m + 1] * Y[m::-1])
    return out


class GevreyFit(NamedTuple):
    M: float
    R: float
    s: float
    residual: float


def fit_gevrey(log_sup, s=None, orders=None):
    """Fit an envelope |h^(n)| <= M (n!)^s / R^n to measured log-magnitudes.

    ``log_sup[i]`` is log sup_t |h^(n_i)(t)|.  With ``s`` given, (log M,
    log R) are fitted by least squares and log M is then raised until every
    point lies under the envelope; with ``s=None`` the exponent is fitted as
    well.  ``residual`` is the rms misfit of the least-squares line.
    """
    y = np.asarray(log_sup, dtype=float)
    n = np.arange(y.size, dtype=float) if orders is None else np.asarray(orders, dtype=float)
    keep = np.isfinite(y)
    y, n = y[keep], n[keep]
    if y.size == 0:
        return GevreyFit(0.0, 1.0, float("nan") if s is None else s, 0.0)
    lf = np.array([math.lgamma(k + 1.0) for k in n])
    if s is None:
        if y.size < 3:
            raise ValueError("need at least three orders to fit the exponent")
        A = np.column_stack([np.ones_like(n), lf, -n])
        (logM, s_fit, logR), *_ = np.linalg.lstsq(A, y, rcond=None)
        line = logM + s_fit * lf - n * logR
    else:
        s_fit = float(s)
        z = y - s_fit * lf
        if y.size == 1:
            logM, logR = z[0], 0.0
        else:
            A = np.column_stack([np.ones_like(n), -n])
            (logM, logR), *_ = np.linalg.lstsq(A, z, rcond=None)
        line = logM + s_fit * lf - n * logR
    residual = float(np.sqrt(np.mean((y - line) ** 2)))
    logM += max(0.0, float(np.max(y - line)))
    return GevreyFit(math.exp(min(logM, 700.0)), math.exp(logR), float(s_fit), residual)
