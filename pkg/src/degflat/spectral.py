"""Eigenbasis of the degenerate operator, projections and the flat output.

The operator A f = -(x^alpha f')' on (0, 1) with the weighted flux condition
at 0 and a Dirichlet condition at 1 has eigenpairs

    phi_k(x) = b_k x^((1-alpha)/2) J_nu(j_k x^(1-alpha/2)),
    lambda_k = (1 - alpha/2)^2 j_k^2,

with nu = (alpha-1)/(2-alpha), j_k the zeros of J_nu and
b_k = sqrt(2-alpha)/|J_{nu+1}(j_k)|.  All inner products are computed in the
variable w = x^(1-alpha/2), in which x = w^(2nu+2) and the integrands are
smooth.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, QuadratureError, PrecisionWarning, ConfigError
from .specfun import ZeroTable, bessel_j, bessel_j_scaled, bessel_zeros, log_gamma

ALPHA_MIN = 1.0
ALPHA_MAX = 2.0 - 1e-3
T_MIN_FRACTION = 1e-4
TAIL_RTOL = 1e-10
PROJECT_TOL = 1e-10
GL_POINTS = 20
MAX_PANELS = 8192


@dataclass(frozen=True)
class ModelParams:
    """Constants of the control problem; ``tau`` defaults to T/3."""
    alpha: float
    T: float = 1.0
    tau: float | None = None
    s: float = 1.5

    def __post_init__(self):
        alpha, T, s = float(self.alpha), float(self.T), float(self.s)
        if not ALPHA_MIN <= alpha <= ALPHA_MAX:
            raise DomainError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}")
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"horizon T must be positive, got {T}")
        tau = T / 3.0 if self.tau is None else float(self.tau)
        if not 0.0 < tau < T:
            raise DomainError(f"waiting time must lie in (0, T), got {tau}")
        if not 1.0 < s < 2.0:
            raise DomainError(f"Gevrey order must lie in (1, 2), got {s}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "s", s)

    @property
    def nu(self):
        return (self.alpha - 1.0) / (2.0 - self.alpha)

    @property
    def kappa(self):
        """Exponent 1 - alpha/2 of the substitution w = x^kappa."""
        return 1.0 - 0.5 * self.alpha


@dataclass(frozen=True)
class EigenBasis:
    params: ModelParams
    zeros: ZeroTable
    lambdas: np.ndarray
    norm_factors: np.ndarray
    # sign and log-magnitude of J_{nu+1}(j_k), reused by the flat output
    jnext_sign: np.ndarray = field(repr=False)
    jnext_log: np.ndarray = field(repr=False)

    @property
    def K(self):
        return self.lambdas.size

    @property
    def nu(self):
        return self.params.nu


@dataclass(frozen=True)
class SpectralCoeffs:
    a: np.ndarray
    f0_norm: float

    @property
    def K(self):
        return self.a.size


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def build_basis(params, K):
    if K < 1:
        raise DomainError("mode count K must be at least 1")
    nu = params.nu
    zt = bessel_zeros(nu, K)
    j = zt.zeros
    lam = params.kappa ** 2 * j ** 2
    jn = bessel_j(nu + 1.0, j)
    b = math.sqrt(2.0 - params.alpha) / np.abs(jn)
    return EigenBasis(params, zt, _frozen(lam), _frozen(b),
                      _frozen(np.sign(jn)), _frozen(np.log(np.abs(jn))))


def default_mode_count(params, decay=60.0):
    """Smallest K with lambda_K * tau >= decay."""
    # lambda_k grows like (kappa pi k)^2, so this guess is close
    k = max(1, int(math.sqrt(decay / params.tau) / (params.kappa * math.pi)))
    while True:
        j = bessel_zeros(params.nu, k).zeros[-1]
        if params.kappa ** 2 * j ** 2 * params.tau >= decay:
            return k
        k += 1


def _check_index(basis, k):
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= basis.K):
        raise IndexError(f"mode index must be in 1..{basis.K}, got {k}")


def _modes(basis, ks, w):
    # w^(-nu) J_nu(j w), shape (len(ks), len(w)), finite at w = 0
    nu = basis.nu
    j = basis.zeros.zeros[np.asarray(ks) - 1][:, None]
    return (0.5 * j) ** nu * bessel_j_scaled(nu, j * w[None, :])


def eigenfunction(basis, k, x):
    """phi_k(x) for x in [0, 1]; x = 0 is the finite limit value."""
    _check_index(basis, k)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > 1):
        raise DomainError("eigenfunctions are defined on [0, 1]")
    w = np.atleast_1d(xa) ** basis.params.kappa
    out = basis.norm_factors[k - 1] * _modes(basis, [k], w)[0]
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def eigenfunction_flux(basis, k, x):
    """x^alpha phi_k'(x), which vanishes at x = 0."""
    _check_index(basis, k)
    p = basis.params
    nu = basis.nu
    xa = np.asarray(x, dtype=float)
    x1 = np.atleast_1d(xa)
    w = x1 ** p.kappa
    j = basis.zeros.zeros[k - 1]
    # d/dw [w^-nu J_nu(j w)] = -j w^-nu J_{nu+1}(j w), dw/dx = kappa x^(-alpha/2)
    inner = (0.5 * j) ** (nu + 1.0) * w * bessel_j_scaled(nu + 1.0, j * w)
    out = -basis.norm_factors[k - 1] * j * p.kappa * x1 ** (0.5 * p.alpha) * inner
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def boundary_slopes(basis):
    """phi_k'(1) for all modes."""
    p = basis.params
    j = basis.zeros.zeros
    return -basis.norm_factors * j * p.kappa * basis.jnext_sign * np.exp(basis.jnext_log)


# --- projection ---------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_POINTS)


def _composite_nodes(edges):
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (1.0 + _GL_X[None, :])).ravel()
    weights = (half * _GL_W[None, :]).ravel()
    return nodes, weights


def _refine(edges):
    mid = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(edges.size + mid.size)
    out[0::2] = edges
    out[1::2] = mid
    return out


def _project_once(basis, f0, edges):
    p = basis.params
    nu = basis.nu
    w, qw = _composite_nodes(edges)
    fx = np.asarray(f0(w ** (2.0 * nu + 2.0)), dtype=float) * np.ones_like(w)
    if not np.all(np.isfinite(fx)):
        raise DomainError("initial datum returned non-finite values")
    jac = (2.0 * nu + 2.0) * w ** (2.0 * nu + 1.0)
    ks = np.arange(1, basis.K + 1)
    phi = basis.norm_factors[:, None] * _modes(basis, ks, w)
    a = phi @ (qw * jac * fx)
    norm2 = float(np.sum(qw * jac * fx * fx))
    return a, norm2


def project(basis, f0, tol=PROJECT_TOL, breakpoints=None):
    """Coefficients a_k = <f0, phi_k> by adaptive composite Gauss-Legendre.

    The panel count doubles until two successive estimates of every a_k and
    of ||f0||^2 agree to ``tol``.  ``breakpoints`` (x-values where f0 is
    less smooth, e.g. sample locations) are added as panel edges; callables
    carrying a ``breakpoints`` attribute supply them automatically.
    """
    kappa = basis.params.kappa
    if breakpoints is None:
        breakpoints = getattr(f0, "breakpoints", None)
    edges = np.linspace(0.0, 1.0, 5)
    if breakpoints is not None:
        bw = np.clip(np.asarray(breakpoints, dtype=float), 0.0, 1.0) ** kappa
        edges = np.unique(np.concatenate([edges, bw]))
    a, n2 = _project_once(basis, f0, edges)
    err = math.inf
    while edges.size - 1 <= MAX_PANELS:
        edges = _refine(edges)
        a2, n22 = _project_once(basis, f0, edges)
        err = max(float(np.max(np.abs(a2 - a))), abs(n22 - n2))
        a, n2 = a2, n22
        if err <= tol:
            return SpectralCoeffs(_frozen(a), math.sqrt(max(n2, 0.0)))
    raise QuadratureError("projection did not converge", err)


# --- evaluation -----------------------------------------------------------------

def _synthesize(basis, weights, x):
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > 1):
        raise DomainError("x must lie in [0, 1]")
    w = np.atleast_1d(xa).ravel() ** basis.params.kappa
    ks = np.arange(1, basis.K + 1)
    vals = (weights * basis.norm_factors) @ _modes(basis, ks, w)
    return float(vals[0]) if xa.ndim == 0 else vals.reshape(xa.shape)


def free_evolution(basis, coeffs, t, x, return_tail=False):
    """Uncontrolled solution sum_k e^(-lambda_k t) a_k phi_k(x).

    With ``return_tail`` the L2 bound e^(-lambda_K t) ||f0|| on the
    truncated modes is returned as well.
    """
    if t < 0:
        raise DomainError("time must be nonnegative")
    decay = np.exp(-basis.lambdas * t)
    val = _synthesize(basis, decay * coeffs.a, x)
    if return_tail:
        return val, math.exp(-basis.lambdas[-1] * t) * coeffs.f0_norm
    return val


def free_norm(basis, coeffs, t):
    """L2 norm of the truncated free evolution, by Parseval."""
    return math.sqrt(float(np.sum(coeffs.a ** 2 * np.exp(-2.0 * basis.lambdas * t))))


def _flat_prefactor_log(p):
    # log of sqrt(2-alpha) / (2^nu Gamma(nu+1))
    nu = p.nu
    return 0.5 * math.log(2.0 - p.alpha) - nu * math.log(2.0) - log_gamma(nu + 1.0)


def _tail_log_terms(basis, f0_norm, t, orders):
    # modes beyond K: |a_k| <= ||f0||, j^nu/|J_{nu+1}(j)| ~ sqrt(pi/2) j^(nu+1/2)
    p = basis.params
    nu = basis.nu
    K = basis.K
    extra = np.arange(K + 1, K + 4001, dtype=float)
    j = (extra + 0.5 * nu - 0.25) * math.pi
    lam = p.kappa ** 2 * j ** 2
    base = (_flat_prefactor_log(p) + math.log(max(f0_norm, 1e-300))
            + 0.5 * math.log(0.5 * math.pi) + (nu + 0.5) * np.log(j) - lam * t)
    logs = base[None, :] + orders[:, None] * np.log(lam)[None, :]
    m = np.max(logs, axis=1)
    return m + np.log(np.sum(np.exp(logs - m[:, None]), axis=1))


def flat_output_derivs(basis, coeffs, t, N, taylor=False, return_tail=False, warn=True):
    """Derivatives Y^(0..N)(t) of the flat output.

    Y(t) = sum_k a_k phi_k(0) e^(-lambda_k t) is the free evolution at the
    degenerate end, so Y^(n) carries the factors (-lambda_k)^n.  Terms are
    formed in log space.  With ``taylor`` the values Y^(n)/n! are returned,
    which stay representable for large N.  A PrecisionWarning is issued when
    the estimated contribution of the omitted modes exceeds 1e-10 of the
    result.
    """
    p = basis.params
    t = float(t)
    if t < T_MIN_FRACTION * p.T:
        raise DomainError(f"flat output needs t >= {T_MIN_FRACTION * p.T:g}, got {t}")
    if N < 0:
        raise DomainError("derivative order must be nonnegative")
    n = np.arange(N + 1, dtype=float)
    lf = np.array([math.lgamma(k + 1.0) for k in range(N + 1)]) if taylor else np.zeros(N + 1)
    a = coeffs.a
    nz = a != 0.0
    lam = basis.lambdas[nz]
    wlog = (_flat_prefactor_log(p) + np.log(np.abs(a[nz])) + basis.nu * np.log(basis.zeros.zeros[nz])
            - basis.jnext_log[nz])
    wsign = np.sign(a[nz])
    out = np.zeros(N + 1)
    if lam.size:
        logs = wlog[None, :] + n[:, None] * np.log(lam)[None, :] - lam[None, :] * t - lf[:, None]
        signs = wsign[None, :] * np.where(n % 2 == 1, -1.0, 1.0)[:, None]
        with np.errstate(over="ignore"):
            terms = signs * np.exp(logs)
        out = np.array([math.fsum(row) for row in terms])
    tail = np.exp(_tail_log_terms(basis, coeffs.f0_norm, t, n) - lf)
    if warn and np.any(tail > TAIL_RTOL * np.abs(out)) and coeffs.f0_norm > 0:
        worst = int(np.argmax(tail / np.maximum(np.abs(out), 1e-300)))
        warnings.warn(
            f"flat output at t={t:g}: omitted modes may contribute {tail[worst]:.3e} "
            f"to order {worst} (value {out[worst]:.3e}); increase K",
            PrecisionWarning, stacklevel=2)
    if return_tail:
        return out, tail
    return out


def series_weights_log(p, N):
    """log of 1/((2-alpha)^(2n) prod_{j<=n}(j+nu)), i.e. n!/d_n."""
    nu = p.nu
    n = np.arange(N + 1, dtype=float)
    return -(2.0 * n * math.log(2.0 - p.alpha) + log_gamma(n + nu + 1.0) - log_gamma(nu + 1.0))


def reconstruct_from_flat(basis, coeffs, t, x, N):
    """Series sum_n Y^(n)(t) w^(2n) / d_n, with w = x^(1-alpha/2).

    Equals the free evolution for every t > 0 when N and K are large enough.
    """
    p = basis.params
    ytay = flat_output_derivs(basis, coeffs, t, N, taylor=True, warn=False)
    wl = series_weights_log(p, N)
    xa = np.asarray(x, dtype=float)
    w2 = np.atleast_1d(xa) ** (2.0 * p.kappa)
    with np.errstate(divide="ignore"):
        lw2 = np.log(w2)
    n = np.arange(N + 1)
    with np.errstate(invalid="ignore"):
        logs = wl[None, :] + np.where(n[None, :] == 0, 0.0, n[None, :] * lw2[:, None])
    terms = ytay[None, :] * np.exp(logs)
    vals = np.array([math.fsum(r) for r in terms])
    return float(vals[0]) if xa.ndim == 0 else vals.reshape(xa.shape)


# --- initial data -------------------------------------------------------------

class InitialDatum:
    """Callable initial profile with an optional list of breakpoints in x."""

    def __init__(self, func, label, breakpoints=None):
        self._func = func
        self.label = label
        self.breakpoints = breakpoints

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self._func(x), dtype=float) * np.ones_like(x)

    def __repr__(self):
        return f"InitialDatum({self.label!r})"


def read_samples_csv(path):
    """Read a two-column ``x,f0`` file; x strictly increasing in [0, 1]."""
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2,
                          skiprows=_header_rows(path))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read samples from {path}: {exc}") from exc
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ConfigError(f"{path}: expected at least two rows of x,f0")
    x, f = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(data)) and np.all(np.diff(x) > 0) and x[0] >= 0 and x[-1] <= 1):
        raise ConfigError(f"{path}: x must be strictly increasing in [0, 1] and values finite")
    return x, f


def _header_rows(path):
    with open(path) as fh:
        first = fh.readline().strip()
    try:
        [float(v) for v in first.split(",")]
        return 0
    except ValueError:
        return 1


def sampled_datum(x, f, label="samples"):
    """Monotone cubic (PCHIP) interpolant, held constant outside the samples."""
    from scipy.interpolate import PchipInterpolator
    interp = PchipInterpolator(x, f, extrapolate=False)
    lo, hi = float(x[0]), float(x[-1])
    return InitialDatum(lambda z: interp(np.clip(z, lo, hi)), label, breakpoints=np.asarray(x))


def parse_initial_datum(spec, basis):
    """Build f0 from ``const c``, ``poly c0 c1 ...``, ``eig k [k2 ...]`` or ``csv path``."""
    parts = str(spec).split()
    if not parts:
        raise ConfigError("empty initial datum")
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind == "const" and len(args) == 1:
            c = float(args[0])
            return InitialDatum(lambda x: np.full_like(x, c), spec)
        if kind == "poly" and args:
            cs = [float(v) for v in args]
            return InitialDatum(lambda x: np.polynomial.polynomial.polyval(x, cs), spec)
        if kind == "eig" and args:
            ks = [int(v) for v in args]
            for k in ks:
                if not 1 <= k <= basis.K:
                    raise ConfigError(f"eigenfunction index {k} outside 1..{basis.K}")
            return InitialDatum(lambda x: sum(eigenfunction(basis, k, x) for k in ks), spec)
        if kind == "csv" and len(args) == 1:
            x, f = read_samples_csv(args[0])
            return sampled_datum(x, f, spec)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad initial datum {spec!r}: {exc}") from exc
    raise ConfigError(f"unrecognised initial datum {spec!r}")
