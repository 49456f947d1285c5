"""Time integration of full and reduced parabolic systems.

Forward solves use the theta scheme (implicit Euler by default); the cubic
semilinear model is advanced by Newton's method in every step. The backward
adjoint is the exact transpose of the implicit Euler forward map, so reduced
gradients are consistent with the discrete cost to rounding.

Models are duck-typed: they provide ``M``, ``stiffness(t)``, ``B``,
``loads(times)``, ``y0``, ``cubic``, ``nl(y)``, ``nl_jac(y)``,
``lift(Y)``, ``restrict(R)``, ``full_mass`` and a ``_cache`` dict. Both
:class:`podctl.fem.FeModel` (through :func:`as_full`) and
:class:`podctl.rom.RomModel` satisfy it.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConvergenceError

__all__ = [
    "Trajectory",
    "solve_theta",
    "solve_semilinear",
    "solve_state",
    "solve_adjoint",
    "adjoint_sweep",
    "tracking_terms",
    "save_trajectory",
    "load_trajectory",
]

NEWTON_RTOL = 1e-11
NEWTON_MAXIT = 50
_CACHE_LIMIT = 4000


@dataclass
class Trajectory:
    """Coefficient trajectory on a time grid (``kind`` is state or adjoint)."""

    Y: np.ndarray
    grid: object
    kind: str = "state"

    def __post_init__(self):
        if self.Y.shape[1] != self.grid.n:
            raise ConfigError("trajectory columns must match the time grid")
        if not np.all(np.isfinite(self.Y)):
            raise ConvergenceError("trajectory contains non-finite entries")


# Linear algebra helpers ====================================================
class _Factor:
    def __init__(self, A):
        if sp.issparse(A):
            self.lu = spla.splu(sp.csc_matrix(A))
            self.sparse = True
        else:
            self.lu = la.lu_factor(np.asarray(A))
            self.sparse = False

    def solve(self, b, trans=False):
        if self.sparse:
            return self.lu.solve(b, trans="T" if trans else "N")
        return la.lu_solve(self.lu, b, trans=1 if trans else 0)


def _step_factor(model, dt, t, theta=1.0):
    """Cached factorization of ``M + theta dt A(t)``."""
    s = model.scale(t)
    key = ("E", float(dt * theta), s)
    cache = model._cache
    if key not in cache:
        if sum(1 for k in cache if isinstance(k, tuple) and k[0] == "E") > _CACHE_LIMIT:
            for k in [k for k in cache if isinstance(k, tuple) and k[0] == "E"]:
                del cache[k]
        cache[key] = _Factor(model.M + (theta * dt) * model.stiffness(t))
    return cache[key]


def _forcing(model, grid, u, loads=True):
    F = model.loads(grid.t) if loads else np.zeros((model.M.shape[0], grid.n))
    if u is not None and model.B.shape[1]:
        u = np.asarray(u, dtype=float)
        if u.shape != (model.B.shape[1], grid.n):
            raise ConfigError(f"control must have shape {(model.B.shape[1], grid.n)}")
        F = F + model.B @ u
    return F


def _initial(model, y0):
    y = model.y0 if y0 is None else np.asarray(y0, dtype=float)
    if y.shape != (model.M.shape[0],):
        raise ConfigError("initial vector has the wrong length")
    return y


# Forward solvers ===========================================================
def solve_theta(model, grid, u=None, theta=1.0, y0=None, loads=True):
    """Linear theta scheme.

    Solves ``(M + theta dt_j A_j) y_j = (M - (1-theta) dt_j A_{j-1}) y_{j-1}
    + dt_j (theta f_j + (1-theta) f_{j-1})`` with ``f_j = g(t_j) + B u_j``
    and ``y_1`` the nodal initial vector.

    Parameters
    ----------
    model : model
    grid : TimeGrid
    u : (m_c, n) ndarray, optional
        Control values at the nodes.
    theta : float
        In ``[0, 1]``.
    y0 : ndarray, optional
        Overrides the model's initial vector.
    loads : bool
        False drops the uncontrolled loads (for linearized solves).

    Returns
    -------
    Trajectory
    """
    if not 0.0 <= theta <= 1.0:
        raise ConfigError("theta must lie in [0, 1]")
    F = _forcing(model, grid, u, loads)
    n = grid.n
    Y = np.empty((model.M.shape[0], n))
    Y[:, 0] = _initial(model, y0)
    for j in range(1, n):
        dt, t = grid.dt[j], grid.t[j]
        rhs = model.M @ Y[:, j - 1] + dt * theta * F[:, j]
        if theta < 1.0:
            rhs -= (1.0 - theta) * dt * (model.stiffness(grid.t[j - 1]) @ Y[:, j - 1])
            rhs += (1.0 - theta) * dt * F[:, j - 1]
        if theta == 0.0:
            lu = model._cache.get("Mfac")
            if lu is None:
                lu = model._cache["Mfac"] = _Factor(model.M)
        else:
            lu = _step_factor(model, dt, t, theta)
        try:
            Y[:, j] = lu.solve(rhs)
        except (RuntimeError, la.LinAlgError) as exc:
            raise ConvergenceError(f"singular step matrix at node {j}", step=j) from exc
    return Trajectory(Y, grid, "state")


def solve_semilinear(model, grid, u=None, y0=None):
    """Implicit Euler for ``M y' + A y + M N(y) = g + B u`` with ``N_i(y) = y_i^3``.

    Each step solves ``(M + dt A) y + dt nl(y) = M y_{j-1} + dt f_j`` by
    Newton's method with the analytic Jacobian; converged when the residual
    max-norm is at most ``1e-11 (1 + |rhs|_inf)``.

    Raises
    ------
    ConvergenceError
        After 50 iterations without convergence, carrying the node index and
        the last residual.
    """
    F = _forcing(model, grid, u)
    n = grid.n
    Y = np.empty((model.M.shape[0], n))
    Y[:, 0] = _initial(model, y0)
    for j in range(1, n):
        dt, t = grid.dt[j], grid.t[j]
        A = model.stiffness(t)
        E = model.M + dt * A
        rhs = model.M @ Y[:, j - 1] + dt * F[:, j]
        tol = NEWTON_RTOL * (1.0 + np.abs(rhs).max())
        y = Y[:, j - 1].copy()
        for it in range(NEWTON_MAXIT + 1):
            res = E @ y + dt * model.nl(y) - rhs
            rn = np.abs(res).max()
            if rn <= tol:
                break
            if it == NEWTON_MAXIT:
                raise ConvergenceError(f"Newton failed at node {j} (residual {rn:.3e})", j, rn)
            J = E + dt * model.nl_jac(y)
            y = y - _Factor(J).solve(res)
        Y[:, j] = y
    return Trajectory(Y, grid, "state")


def solve_state(model, grid, u=None, y0=None):
    """Implicit Euler state for linear or cubic models."""
    if model.cubic:
        return solve_semilinear(model, grid, u, y0)
    return solve_theta(model, grid, u, 1.0, y0)


# Adjoint ===================================================================
def _as_columns(value, m, grid):
    if value is None:
        return np.zeros((m, grid.n))
    if callable(value):
        return np.column_stack([np.broadcast_to(value(t), (m,)) for t in grid.t])
    v = np.asarray(value, dtype=float)
    if v.ndim == 0 or v.shape == (m,):
        return np.repeat(np.broadcast_to(v, (m,))[:, None], grid.n, axis=1)
    if v.shape == (m, grid.n):
        return v
    raise ConfigError("desired state has the wrong shape")


def tracking_terms(model, grid, Y, spec):
    """Adjoint sources of the tracking and terminal terms.

    Returns ``(R, terminal)`` in model coordinates, where
    ``R[:, j] = sigma1 alpha_j restrict(M (yd1_j - lift(y_j)))`` and
    ``terminal = sigma2 restrict(M (yd2 - lift(y_n)))``.
    """
    m = model.full_mass.shape[0]
    Z = model.lift(Y)
    R = np.zeros_like(Y)
    if spec.sigma1:
        D = _as_columns(spec.yd1, m, grid) - Z
        R = model.restrict(model.full_mass @ D) * (spec.sigma1 * grid.alpha)
    term = np.zeros(Y.shape[0])
    if spec.sigma2:
        yd2 = np.broadcast_to(np.asarray(spec.yd2, dtype=float), (m,))
        term = spec.sigma2 * model.restrict(model.full_mass @ (yd2 - Z[:, -1]))
    return R, term


def adjoint_sweep(model, grid, Y, R, terminal):
    """Backward sweep ``E_j^T p_j = M p_{j+1} + R_j`` (plus ``terminal`` at the end).

    ``E_j = M + dt_j A_j`` with the cubic linearization
    ``dt_j nl_jac(y_j)`` added for semilinear models. The first column is
    filled by the same recursion with ``E_1 = M + dt_2 A_1`` so that it can
    serve as a snapshot; it does not enter the gradient.
    """
    n = grid.n
    P = np.zeros_like(Y)
    nxt = np.zeros(Y.shape[0])
    for j in range(n - 1, -1, -1):
        dt = grid.dt[j] if j > 0 else grid.dt[1]
        rhs = model.M.T @ nxt + R[:, j]
        if j == n - 1:
            rhs = rhs + terminal
        if model.cubic:
            E = model.M + dt * model.stiffness(grid.t[j]) + dt * model.nl_jac(Y[:, j])
            P[:, j] = _Factor(E).solve(rhs, trans=True)
        else:
            P[:, j] = _step_factor(model, dt, grid.t[j]).solve(rhs, trans=True)
        nxt = P[:, j]
    return P


def solve_adjoint(model, grid, state, spec, source=None):
    """Discrete adjoint of the implicit Euler scheme.

    Parameters
    ----------
    state : Trajectory
    spec : OcpSpec-like
        Provides ``sigma1``, ``sigma2``, ``yd1`` and ``yd2``.
    source : (m, n) ndarray, optional
        Additional right-hand sides in model coordinates.

    Returns
    -------
    Trajectory
        ``kind="adjoint"``.
    """
    if state.grid.n != grid.n or not np.array_equal(state.grid.t, grid.t):
        raise ConfigError("state and adjoint grids differ")
    R, term = tracking_terms(model, grid, state.Y, spec)
    if source is not None:
        R = R + source
    return Trajectory(adjoint_sweep(model, grid, state.Y, R, term), grid, "adjoint")


# IO ========================================================================
def save_trajectory(path, traj):
    """CSV with one column per node and a JSON header ``path + '.json'``."""
    np.savetxt(path, traj.Y, delimiter=",", fmt="%.17g")
    with open(str(path) + ".json", "w") as fh:
        json.dump({"kind": traj.kind, "t": traj.grid.t.tolist()}, fh)


def load_trajectory(path):
    from .fem import make_time_grid

    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    t = np.array(meta["t"])
    grid = make_time_grid(t[-1] - t[0], t.size, t)
    return Trajectory(np.loadtxt(path, delimiter=",", ndmin=2), grid, meta["kind"])
