"""Two independent solvers for the controlled degenerate heat equation.

``galerkin_solve`` works in the eigenbasis after lifting the boundary value
with theta(x) = x^2, so that f = g + u theta and g satisfies the equation
with homogeneous boundary data and source -u' theta - u A theta.
``fv_solve`` discretises the flux form directly on a graded vertex-centred
mesh with Crank-Nicolson time stepping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridError, NumericalError
from .flatness import fmt
from .spectral import _synthesize, project

THETA_NORM2 = 0.2  # int_0^1 x^4 dx


@dataclass(frozen=True)
class GridState:
    mesh: np.ndarray
    values: np.ndarray
    time: float

    def __post_init__(self):
        m = np.asarray(self.mesh, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if m.ndim != 1 or m.size < 2 or m[0] != 0.0 or m[-1] != 1.0 or np.any(np.diff(m) <= 0):
            raise GridError("mesh must increase strictly from 0 to 1")
        if v.shape != m.shape:
            raise GridError("values and mesh differ in length")
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite values at t={self.time}")
        object.__setattr__(self, "mesh", m)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class LiftedState:
    time: float
    g: np.ndarray
    u_now: float
    u_prime_now: float


def l2_norm(state):
    """Trapezoidal L2 norm of a GridState."""
    return math.sqrt(float(np.trapezoid(state.values ** 2, state.mesh)))


def graded_mesh(alpha, M):
    """Nodes (i/M)^(2/(2-alpha)), uniform in w = x^(1-alpha/2)."""
    if M < 1:
        raise GridError("need at least one cell")
    x = (np.arange(M + 1) / M) ** (2.0 / (2.0 - alpha))
    x[0], x[-1] = 0.0, 1.0
    return x


def _grid_indices(times, t_grid):
    # positions of t_grid inside the control grid; no interpolation
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise GridError("time grid must be strictly increasing")
    idx = np.searchsorted(times, t_grid)
    idx = np.clip(idx, 0, times.size - 1)
    left = np.clip(idx - 1, 0, times.size - 1)
    pick = np.where(np.abs(times[left] - t_grid) < np.abs(times[idx] - t_grid), left, idx)
    tol = 1e-12 * max(1.0, abs(times[-1]))
    if np.any(np.abs(times[pick] - t_grid) > tol):
        raise GridError("time grid is not contained in the control grid; resample the control")
    return pick


def control_derivative(control):
    """u' on the control grid by second-order finite differences."""
    return np.gradient(control.u, control.times, edge_order=2)


# --- spectral Galerkin ------------------------------------------------------------

@dataclass(frozen=True)
class GalerkinTrajectory:
    basis: object
    states: tuple
    theta: np.ndarray

    @property
    def times(self):
        return np.array([s.time for s in self.states])

    def reconstruct(self, i, x):
        """f(t_i, x) = sum_k g_k phi_k(x) + u(t_i) x^2."""
        s = self.states[i]
        x = np.asarray(x, dtype=float)
        return _synthesize(self.basis, s.g, x) + s.u_now * x ** 2

    def l2_norm(self, i):
        s = self.states[i]
        n2 = float(np.sum(s.g ** 2) + 2.0 * s.u_now * np.dot(s.g, self.theta)
                   + s.u_now ** 2 * THETA_NORM2)
        return math.sqrt(max(n2, 0.0))

    def l2_norms(self):
        return np.array([self.l2_norm(i) for i in range(len(self.states))])


def lifting_coefficients(basis):
    """<theta, phi_k> and <A theta, phi_k> with A theta = -2(alpha+1) x^alpha."""
    alpha = basis.params.alpha
    theta = project(basis, lambda x: x ** 2).a
    a_theta = project(basis, lambda x: -2.0 * (alpha + 1.0) * x ** alpha).a
    return theta, a_theta


def _phi_integrals(z):
    # I1 = (1 - e^-z)/z and I2 = (1 - e^-z (1 + z))/z^2, stable for small z
    z = np.asarray(z, dtype=float)
    i1 = np.where(z > 1e-8, -np.expm1(-z) / np.where(z > 0, z, 1.0), 1.0 - 0.5 * z)
    small = z < 1e-3
    zs = np.where(small, z, 1.0)
    i2_series = 0.5 - zs / 3.0 + zs ** 2 / 8.0 - zs ** 3 / 30.0
    zb = np.where(small, 1.0, z)
    i2_direct = (-np.expm1(-zb) - zb * np.exp(-zb)) / zb ** 2
    return i1, np.where(small, i2_series, i2_direct)


def galerkin_solve(basis, coeffs, control, t_grid=None):
    """Modal trajectory of the lifted problem under the sampled control.

    Each step integrates g' = -lambda g + H exactly for H linear in time
    between consecutive grid points.
    """
    times = np.asarray(control.times)
    t_grid = times if t_grid is None else np.asarray(t_grid, dtype=float)
    idx = _grid_indices(times, t_grid)
    u_all = np.asarray(control.u)
    up_all = control_derivative(control)
    u, up = u_all[idx], up_all[idx]
    theta, a_theta = lifting_coefficients(basis)
    lam = basis.lambdas
    H = -up[:, None] * theta[None, :] - u[:, None] * a_theta[None, :]
    g = np.array(coeffs.a, dtype=float) - u[0] * theta
    states = [LiftedState(float(t_grid[0]), g.copy(), float(u[0]), float(up[0]))]
    for n in range(t_grid.size - 1):
        dt = t_grid[n + 1] - t_grid[n]
        z = lam * dt
        i1, i2 = _phi_integrals(z)
        # int_0^dt e^{-lam(dt-r)} (H0 + (H1-H0) r/dt) dr, written with H1 first
        g = np.exp(-z) * g + dt * (H[n + 1] * i1 - (H[n + 1] - H[n]) * i2)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"Galerkin state became non-finite at t={t_grid[n + 1]}")
        states.append(LiftedState(float(t_grid[n + 1]), g.copy(), float(u[n + 1]), float(up[n + 1])))
    return GalerkinTrajectory(basis, tuple(states), theta)


# --- finite volumes ---------------------------------------------------------------

def control_volumes(mesh):
    """Dual cell lengths around each node, half cells at the two ends."""
    mid = 0.5 * (mesh[:-1] + mesh[1:])
    edges = np.concatenate([[mesh[0]], mid, [mesh[-1]]])
    return np.diff(edges)


def _transmissivities(mesh, alpha):
    mid = 0.5 * (mesh[:-1] + mesh[1:])
    return mid ** alpha / np.diff(mesh)


def boundary_flux(state, alpha):
    """Discrete flux x^alpha f_x through the last interface."""
    c = _transmissivities(state.mesh, alpha)[-1]
    return float(c * (state.values[-1] - state.values[-2]))


@dataclass(frozen=True)
class FVTrajectory:
    states: tuple
    alpha: float

    @property
    def times(self):
        return np.array([s.time for s in self.states])

    @property
    def mesh(self):
        return self.states[0].mesh

    def l2_norms(self):
        return np.array([l2_norm(s) for s in self.states])


def fv_solve(params, f0_samples, control, mesh, t_grid=None, startup_steps=2):
    """Crank-Nicolson finite-volume solution on ``mesh``.

    Zero flux at x = 0 and f = u(t) at x = 1; the interior update is
    V_i df_i/dt = F_{i+1/2} - F_{i-1/2} with F = x_mid^alpha (f_{i+1}-f_i)/h.
    The first ``startup_steps`` steps are each taken as two backward Euler
    half steps (Rannacher start), which damps the stiff modes excited when
    f0 does not match u(0) at x = 1; plain Crank-Nicolson would carry them
    along almost undamped on fine meshes.
    """
    mesh = np.asarray(mesh, dtype=float)
    times = np.asarray(control.times)
    t_grid = times if t_grid is None else np.asarray(t_grid, dtype=float)
    idx = _grid_indices(times, t_grid)
    u = np.asarray(control.u)[idx]
    f = np.array(f0_samples, dtype=float)
    if f.shape != mesh.shape:
        raise GridError("initial samples must match the mesh")
    f[-1] = u[0]
    alpha = params.alpha
    vol = control_volumes(mesh)[:-1]
    c = _transmissivities(mesh, alpha)
    m = mesh.size - 1  # interior unknowns 0..m-1
    # L f: (L f)_i = c_i (f_{i+1}-f_i) - c_{i-1} (f_i - f_{i-1}), c_{-1} = 0
    diag = -c.copy()
    diag[1:] -= c[:-1]
    off = c[:-1]

    def apply_l(fi):
        lf = diag * fi
        lf[:-1] += off * fi[1:]
        lf[1:] += off * fi[:-1]
        return lf

    def solve(theta, dt, fi, u_old, u_new, t_new):
        # (V/dt - theta L) f_new = (V/dt + (1-theta) L) f_old + boundary terms
        rhs = vol / dt * fi
        if theta < 1.0:
            rhs += (1.0 - theta) * apply_l(fi)
        rhs[-1] += c[-1] * ((1.0 - theta) * u_old + theta * u_new)
        ab = np.zeros((3, m))
        ab[0, 1:] = -theta * off
        ab[1] = vol / dt - theta * diag
        ab[2, :-1] = -theta * off
        try:
            return solve_banded((1, 1), ab, rhs, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"finite-volume system failed at t={t_new}: {exc}") from exc

    states = [GridState(mesh, f.copy(), float(t_grid[0]))]
    for n in range(t_grid.size - 1):
        dt = t_grid[n + 1] - t_grid[n]
        fi = f[:m]
        if n < startup_steps:
            u_mid = 0.5 * (u[n] + u[n + 1])
            fi = solve(1.0, 0.5 * dt, fi, u[n], u_mid, t_grid[n + 1])
            new = solve(1.0, 0.5 * dt, fi, u_mid, u[n + 1], t_grid[n + 1])
        else:
            new = solve(0.5, dt, fi, u[n], u[n + 1], t_grid[n + 1])
        f = np.concatenate([new, [u[n + 1]]])
        states.append(GridState(mesh, f, float(t_grid[n + 1])))
    return FVTrajectory(tuple(states), alpha)


# --- cross-validation -------------------------------------------------------------

@dataclass(frozen=True)
class CrossValidation:
    checkpoints: np.ndarray
    discrepancy: np.ndarray
    threshold: np.ndarray
    passed: bool

    def as_dict(self):
        return {
            "checkpoints": [float(t) for t in self.checkpoints],
            "discrepancy": [float(d) for d in self.discrepancy],
            "threshold": [float(d) for d in self.threshold],
            "passed": bool(self.passed),
        }


def _nearest(times, t):
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-12 * max(1.0, abs(t)):
        raise GridError(f"checkpoint {t} is not on the trajectory grid")
    return i


def cross_validate(galerkin, fv, checkpoints, fv_error=None):
    """L2 gap between the two solvers at the checkpoints.

    A checkpoint passes when the gap is at most max(1e-3, 5 * fv_error).
    """
    cps = np.asarray(checkpoints, dtype=float)
    gt, ft = galerkin.times, fv.times
    mesh = fv.mesh
    err = np.zeros(cps.size) if fv_error is None else np.broadcast_to(np.asarray(fv_error, float), cps.shape)
    disc = np.empty(cps.size)
    for n, t in enumerate(cps):
        fg = galerkin.reconstruct(_nearest(gt, t), mesh)
        fvv = fv.states[_nearest(ft, t)].values
        disc[n] = math.sqrt(float(np.trapezoid((fg - fvv) ** 2, mesh)))
    thr = np.maximum(1e-3, 5.0 * err)
    return CrossValidation(cps, disc, thr, bool(np.all(disc <= thr)))


# --- export -----------------------------------------------------------------------

def write_trajectory_csv(path, times, mesh, values):
    """Long-format ``t,x,f`` rows; ``values`` has one row per time."""
    with open(path, "w", newline="") as fh:
        fh.write("t,x,f\n")
        for t, row in zip(times, values):
            ts = fmt(t)
            fh.writelines(f"{ts},{fmt(x)},{fmt(v)}\n" for x, v in zip(mesh, row))


def write_norms_csv(path, times, norms):
    with open(path, "w", newline="") as fh:
        fh.write("t,l2norm\n")
        for t, v in zip(times, norms):
            fh.write(f"{fmt(t)},{fmt(v)}\n")
