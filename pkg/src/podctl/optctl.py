"""Control-constrained and mixed-constrained optimal control.

Controls are nodal arrays of shape ``(m_c, n)`` with the trapezoidal inner
product ``<u, v>_U = sum_j alpha_j u_j . v_j``. The reduced cost is

    J(u) = sigma1/2 sum_j alpha_j ||y_j - yd_j||_M^2 + sigma2/2 ||y_n - yd2||_M^2
           + sigma/2 ||u - un||_U^2,

and its ``U``-gradient is ``sigma (u - un) - (dt_j / alpha_j) B^T p_j``
with the discrete adjoint ``p`` (the first node only carries the
regularization term since its control never enters the scheme).

Solvers: projected gradient with Armijo backtracking, a primal-dual active
set method whose linear subproblems are solved by conjugate gradients on the
inactive controls, model predictive control with optional basis updates, and
the Euclidean reference point method for the bicriterial problem.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize as optimize
import scipy.sparse.linalg as spla

from . import evolve
from .errors import ConfigError, ConvergenceError
from .pod import SnapshotSet, WeightedSpace, compute_pod
from .rom import RomModel, galerkin_project, solve_rom

__all__ = [
    "OcpSpec",
    "MixedConstraintSpec",
    "ControlSolution",
    "MpcResult",
    "ParetoFront",
    "u_inner",
    "u_norm",
    "cost",
    "cost_parts",
    "reduced_gradient",
    "hessvec",
    "projected_gradient_solve",
    "aposteriori_control",
    "certified_pod_optimize",
    "pdass_solve",
    "mpc_estimate",
    "mpc_run",
    "pareto_front",
    "nondominated",
]

ARMIJO_C = 1e-4
ACTIVE_TOL = 1e-12


# Specifications ============================================================
def _columns(value, rows, grid, start=0):
    """Broadcast scalar, ``(rows,)``, ``(rows, 1)``, ``(rows, n)`` or callable data to ``(rows, n)``."""
    if callable(value):
        return np.column_stack([np.broadcast_to(np.asarray(value(t), dtype=float), (rows,))
                                for t in grid.t])
    v = np.asarray(value, dtype=float)
    if v.ndim == 0 or v.shape == (rows,) or v.shape == (rows, 1):
        return np.repeat(np.broadcast_to(v.reshape(-1), (rows,))[:, None], grid.n, axis=1)
    if v.shape == (rows, grid.n):
        return v.copy()
    raise ConfigError(f"data of shape {v.shape} does not fit ({rows}, {grid.n})")


def _slice(value, start, stop):
    if callable(value) or value is None:
        return value
    v = np.asarray(value)
    return v[:, start:stop] if v.ndim == 2 else value


@dataclass
class OcpSpec:
    """Cost weights, targets and control bounds.

    ``yd1`` may be None, a scalar, an ``(m,)`` or ``(m, n)`` array or a
    callable of ``t``; ``un``, ``ua`` and ``ub`` accept the same forms for the
    control dimension.
    """

    sigma1: float = 1.0
    sigma2: float = 0.0
    sigma: float = 1.0
    yd1: object = None
    yd2: object = None
    un: object = 0.0
    ua: object = -np.inf
    ub: object = np.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ConfigError("tracking weights must be nonnegative")
        if self.sigma2 and self.yd2 is None:
            raise ConfigError("terminal weight needs a terminal target")

    def arrays(self, m_c, grid):
        """``(un, ua, ub)`` as ``(m_c, n)`` arrays."""
        un, ua, ub = (_columns(v, m_c, grid) for v in (self.un, self.ua, self.ub))
        if np.any(ua > ub):
            raise ConfigError("lower control bound exceeds the upper bound")
        return un, ua, ub

    def window(self, start, stop):
        """Data restricted to the global nodes ``start .. stop-1``."""
        return replace(self, **{k: _slice(getattr(self, k), start, stop)
                                for k in ("yd1", "un", "ua", "ub")})


@dataclass
class MixedConstraintSpec:
    """State bounds relaxed by the virtual control ``w``: ``ya <= y + eps w <= yb``."""

    ya: object = -np.inf
    yb: object = np.inf
    eps: float = 1e-3
    sigma_w: float = 1.0

    def __post_init__(self):
        if not (self.eps > 0 and self.sigma_w > 0):
            raise ConfigError("eps and sigma_w must be positive")

    def arrays(self, m, grid):
        ya, yb = _columns(self.ya, m, grid), _columns(self.yb, m, grid)
        if np.any(ya > yb):
            raise ConfigError("lower state bound exceeds the upper bound")
        return ya, yb

    def window(self, start, stop):
        return replace(self, ya=_slice(self.ya, start, stop), yb=_slice(self.yb, start, stop))


@dataclass
class ControlSolution:
    """Result of an optimal control solve.

    ``state`` and ``adjoint`` are in model coordinates; ``lifted`` holds the
    full-space state. ``J1`` is the tracking part (with the state penalty
    when present) and ``J2 = 1/2 ||u - un||_U^2``.
    """

    u: np.ndarray
    state: np.ndarray
    adjoint: np.ndarray
    cost: float
    J1: float
    J2: float
    stationarity: float
    converged: bool
    iterations: int
    log: list = field(default_factory=list)
    mu: np.ndarray = None
    nu: np.ndarray = None
    w: np.ndarray = None
    lifted: np.ndarray = None
    certificate: dict = None


# Inner products ============================================================
def u_inner(grid, u, v):
    return float(np.sum(grid.alpha * np.sum(u * v, axis=0)))


def u_norm(grid, u):
    return np.sqrt(max(u_inner(grid, u, u), 0.0))


def _w_norm(grid, lm, w):
    return np.sqrt(float(np.sum(grid.alpha * (lm @ (w * w)))))


def _full(model):
    return getattr(model, "full", model)


# Objective =================================================================
class _Objective:
    """Reduced cost of one model on one grid.

    ``penalty = (mask, bd, eta)`` adds ``eta/2 sum_j alpha_j sum_i lm_i
    (y_ij - bd_ij)^2`` over the masked full-space nodes.
    """

    def __init__(self, model, grid, spec, penalty=None):
        self.model, self.grid, self.spec, self.penalty = model, grid, spec, penalty
        self.full = _full(model)
        self.un, self.ua, self.ub = spec.arrays(model.B.shape[1], grid)
        self.yd1 = evolve._as_columns(spec.yd1, self.full.m, grid) if spec.sigma1 else None
        self.ratio = np.zeros(grid.n)
        self.ratio[1:] = grid.dt[1:] / grid.alpha[1:]
        self._last = (None, None)
        self.solves = 0

    def state(self, u, homogeneous=False):
        m = self.model
        y0 = np.zeros(m.M.shape[0]) if homogeneous else None
        self.solves += 1
        if isinstance(m, RomModel):
            return solve_rom(m, self.grid, u, y0, loads=not homogeneous).Y
        if homogeneous:
            return evolve.solve_theta(m, self.grid, u, 1.0, y0, loads=False).Y
        return evolve.solve_state(m, self.grid, u).Y

    def state_cached(self, u):
        if self._last[0] is not None and np.array_equal(self._last[0], u):
            return self._last[1]
        Y = self.state(u)
        self._last = (u.copy(), Y)
        return Y

    def parts(self, u, Y):
        spec, grid, M = self.spec, self.grid, self.full.M
        Z = self.model.lift(Y)
        J1 = 0.0
        if spec.sigma1:
            D = self.yd1 - Z
            J1 += 0.5 * spec.sigma1 * float(np.sum(grid.alpha * np.einsum("ij,ij->j", D, M @ D)))
        if spec.sigma2:
            d = np.broadcast_to(np.asarray(spec.yd2, dtype=float), (self.full.m,)) - Z[:, -1]
            J1 += 0.5 * spec.sigma2 * float(d @ (M @ d))
        if self.penalty is not None:
            mask, bd, eta = self.penalty
            D = np.where(mask, Z - bd, 0.0)
            J1 += 0.5 * eta * float(np.sum(grid.alpha * (self.full.lumped @ (D * D))))
        return J1, 0.5 * u_inner(grid, u - self.un, u - self.un)

    def value(self, u):
        J1, J2 = self.parts(u, self.state_cached(u))
        return J1 + self.spec.sigma * J2

    def adjoint(self, Y, homogeneous=False):
        spec = replace(self.spec, yd1=0.0, yd2=0.0) if homogeneous else self.spec
        R, term = evolve.tracking_terms(self.model, self.grid, Y, spec)
        if self.penalty is not None:
            mask, bd, eta = self.penalty
            Z = self.model.lift(Y)
            D = -Z if homogeneous else bd - Z
            src = np.where(mask, D, 0.0) * (eta * self.grid.alpha) * self.full.lumped[:, None]
            R = R + self.model.restrict(src)
        return evolve.adjoint_sweep(self.model, self.grid, Y, R, term)

    def tracking_gradient(self, P):
        return -self.ratio * (self.model.B.T @ P)

    def gradient(self, u):
        Y = self.state_cached(u)
        P = self.adjoint(Y)
        return self.spec.sigma * (u - self.un) + self.tracking_gradient(P), Y, P

    def hessvec(self, v):
        if self.model.cubic:
            raise ConfigError("Hessian products are implemented for linear models")
        Yv = self.state(v, homogeneous=True)
        Pv = self.adjoint(Yv, homogeneous=True)
        return self.spec.sigma * v + self.tracking_gradient(Pv)

    def stationarity(self, u, g):
        return u_norm(self.grid, u - np.clip(u - g, self.ua, self.ub))


def cost_parts(model, grid, u, spec):
    """``(J1, J2)``: tracking part and ``1/2 ||u - un||_U^2``."""
    obj = _Objective(model, grid, spec)
    return obj.parts(u, obj.state(u))


def cost(model, grid, u, spec):
    J1, J2 = cost_parts(model, grid, u, spec)
    return J1 + spec.sigma * J2


def reduced_gradient(model, grid, u, spec):
    """``U``-gradient of the reduced cost (full or reduced model)."""
    return _Objective(model, grid, spec).gradient(np.asarray(u, dtype=float))[0]


def hessvec(model, grid, v, spec):
    """Hessian of the reduced cost applied to ``v`` (linear models)."""
    return _Objective(model, grid, spec).hessvec(np.asarray(v, dtype=float))


# Projected gradient ========================================================
def _pg_core(value, grad, lo, hi, u0, grid, eta0, tol, max_iter, bb):
    u = np.clip(u0, lo, hi)
    f = value(u)
    g = grad(u)
    log = []
    s = y = None
    converged = False
    for k in range(max_iter + 1):
        stat = u_norm(grid, u - np.clip(u - g, lo, hi))
        log.append((k, f, stat))
        if stat <= tol * (1.0 + u_norm(grid, u)):
            converged = True
            break
        if k == max_iter:
            break
        eta = eta0
        if bb and s is not None:
            sy = u_inner(grid, s, y)
            if sy > 0:
                eta = u_inner(grid, s, s) / sy
        for _ in range(60):
            un = np.clip(u - eta * g, lo, hi)
            fn = value(un)
            if fn <= f + ARMIJO_C * u_inner(grid, g, un - u):
                break
            eta *= 0.5
        else:
            break
        gn = grad(un)
        s, y = un - u, gn - g
        if not np.any(s):
            break
        u, f, g = un, fn, gn
    return u, f, g, stat, converged, k, log


def projected_gradient_solve(model, grid, spec, u0=None, step="armijo", tol=1e-8, max_iter=500):
    """Projected gradient method with Armijo backtracking.

    Parameters
    ----------
    step : {"armijo", "bb"}
        Initial trial step ``1/sigma`` or the Barzilai-Borwein step; both are
        halved until ``J(u+) <= J(u) + 1e-4 <g, u+ - u>_U``.
    tol : float
        Stop when ``||u - P(u - g)||_U <= tol (1 + ||u||_U)``.

    Returns
    -------
    ControlSolution
        ``converged`` is False when ``max_iter`` was reached.
    """
    obj = _Objective(model, grid, spec)
    u0 = obj.un if u0 is None else np.asarray(u0, dtype=float)
    if step not in ("armijo", "bb"):
        raise ConfigError(f"unknown step rule {step!r}")
    u, f, g, stat, ok, it, log = _pg_core(obj.value, lambda v: obj.gradient(v)[0], obj.ua, obj.ub,
                                          u0, grid, 1.0 / spec.sigma, tol, max_iter, step == "bb")
    return _finish(obj, u, stat, ok, it, log)


def _finish(obj, u, stat, ok, it, log, **extra):
    g, Y, P = obj.gradient(u)
    J1, J2 = obj.parts(u, Y)
    return ControlSolution(u, Y, P, J1 + obj.spec.sigma * J2, J1, J2, stat, ok, it, log,
                           lifted=obj.model.lift(Y), **extra)


# Certification =============================================================
def _active(u, lo, hi):
    low = u <= lo + ACTIVE_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(lo), lo, 0.0)))
    up = u >= hi - ACTIVE_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(hi), hi, 0.0)))
    return low, up & ~low


def _zeta(xi, u, lo, hi):
    low, up = _active(u, lo, hi)
    return np.where(low, -np.minimum(0.0, xi), np.where(up, -np.maximum(0.0, xi), -xi))


def aposteriori_control(model, grid, u, spec):
    """Perturbation ``zeta`` and the bound ``||zeta||_U / sigma``.

    The gradient is evaluated with the full model, so the bound dominates the
    distance of ``u`` to the full-order optimum.

    Returns
    -------
    zeta : (m_c, n) ndarray
    bound : float
    """
    obj = _Objective(_full(model), grid, spec)
    xi = obj.gradient(np.asarray(u, dtype=float))[0]
    zeta = _zeta(xi, u, obj.ua, obj.ub)
    return zeta, u_norm(grid, zeta) / spec.sigma


def _state_adjoint_basis(model, grid, spec, u, ell, space=None):
    obj = _Objective(model, grid, spec)
    Y = obj.state(u)
    P = obj.adjoint(Y)
    snaps = SnapshotSet([Y, P], grid.alpha, space or WeightedSpace(model.M, "H"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compute_pod(snaps, rank=ell, strategy="svd")


def _open_loop(model, grid, spec, mixed=None, u0=None):
    if model.cubic:
        return projected_gradient_solve(model, grid, spec, u0, step="bb", tol=1e-10)
    return pdass_solve(model, grid, spec, mixed, u0)


def certified_pod_optimize(model, grid, spec, ell0=1, ell_max=20, eps_apo=1e-4, ell_step=1,
                           u_init=None):
    """POD optimization enlarged until the control certificate is below ``eps_apo``.

    Snapshots are the full state and adjoint at ``u_init`` (default the
    projection of ``un``); the basis is computed once with ``ell_max``
    vectors and the reduced problem is solved for ``ell = ell0, ell0 +
    ell_step, ...``.

    Returns
    -------
    ControlSolution
        With ``certificate = {"bound", "zeta_norm", "ell", "certified",
        "history"}``; ``u`` is the reduced optimum.
    """
    if not 1 <= ell0 <= ell_max:
        raise ConfigError("need 1 <= ell0 <= ell_max")
    obj = _Objective(model, grid, spec)
    u_init = np.clip(obj.un, obj.ua, obj.ub) if u_init is None else u_init
    basis = _state_adjoint_basis(model, grid, spec, u_init, ell_max)
    top = min(ell_max, basis.ell)
    history = []
    ell = min(ell0, top)
    while True:
        rom = galerkin_project(model, basis, ell=ell)
        sol = _open_loop(rom, grid, spec)
        zeta, bound = aposteriori_control(model, grid, sol.u, spec)
        history.append((ell, bound))
        if bound < eps_apo or ell >= top:
            break
        ell = min(ell + ell_step, top)
    sol.certificate = {"bound": bound, "zeta_norm": bound * spec.sigma, "ell": ell,
                       "certified": bound < eps_apo, "history": history}
    return sol


# Primal-dual active set ====================================================
def _cg_inactive(obj, u_fix, inactive, u_start, rtol):
    idx = np.flatnonzero(inactive.ravel())
    if idx.size == 0:
        return u_fix, 0
    D = np.broadcast_to(obj.grid.alpha, u_fix.shape)
    g0 = obj.gradient(u_fix)[0]
    shape = u_fix.shape
    count = [0]

    def mv(x):
        v = np.zeros(shape)
        v.flat[idx] = x
        count[0] += 1
        return (D * obj.hessvec(v)).ravel()[idx]

    op = spla.LinearOperator((idx.size, idx.size), matvec=mv, dtype=float)
    b = -(D * g0).ravel()[idx]
    x, info = spla.cg(op, b, x0=u_start.ravel()[idx], rtol=rtol, atol=0.0, maxiter=10 * idx.size)
    if info > 0:
        raise ConvergenceError("conjugate gradients did not converge", residual=info)
    u = u_fix.copy()
    u.flat[idx] = x
    return u, count[0]


def pdass_solve(model, grid, spec, mixed=None, u0=None, max_iter=50, cg_rtol=1e-13):
    """Primal-dual active set method for box and relaxed state constraints.

    With active sets fixed the optimality system is the minimization of
    ``J(u) + eta/2 ||y + eps w - bd||`` type terms over the inactive
    controls; it is solved by conjugate gradients in the ``U`` product,
    each product costing one linearized state and one adjoint solve. The
    virtual control lives in the nodal ``W`` product ``sum_j alpha_j sum_i
    lm_i w_ij^2`` with the lumped mass ``lm``, which makes all conditions
    pointwise.

    Multipliers: ``mu = -grad_u``, ``nu = -sigma_w w / eps``. Sets:
    ``mu + sigma (u - ua) < 0`` (lower control), ``mu + sigma (u - ub) > 0``,
    ``nu + eta (y + eps w - ya) < 0`` and ``nu + eta (y + eps w - yb) > 0``
    with ``eta = sigma_w / eps^2``. Stops when the sets repeat.

    Returns
    -------
    ControlSolution
        ``converged`` is False after ``max_iter`` subproblem solves.
    """
    if model.cubic:
        raise ConfigError("the active set solver handles linear models")
    base = _Objective(model, grid, spec)
    un, ua, ub, sig = base.un, base.ua, base.ub, spec.sigma
    full = base.full
    fixed = ua == ub
    u = np.clip(un if u0 is None else np.asarray(u0, dtype=float), ua, ub)
    g, Y, P = base.gradient(u)
    mu = -g
    Z = model.lift(Y)
    if mixed is not None:
        ya, yb = mixed.arrays(full.m, grid)
        eps, sw = mixed.eps, mixed.sigma_w
        eta = sw / eps ** 2
    w = np.zeros_like(Z) if mixed is not None else None
    nu = np.zeros_like(Z) if mixed is not None else None
    prev = None
    log = []
    obj = base
    converged = False
    it = 0
    with np.errstate(invalid="ignore"):
        for it in range(max_iter + 1):
            la_ = (mu + sig * (u - ua) < 0) | fixed
            lb_ = (mu + sig * (u - ub) > 0) & ~la_
            sets = [la_, lb_]
            if mixed is not None:
                wa = nu + eta * (Z + eps * w - ya) < 0
                wb = (nu + eta * (Z + eps * w - yb) > 0) & ~wa
                sets += [wa, wb]
            if prev is not None and all(np.array_equal(a, b) for a, b in zip(sets, prev)):
                converged = True
                break
            if it == max_iter:
                break
            prev = sets
            pen = None
            if mixed is not None:
                pen = (wa | wb, np.where(wa, ya, np.where(wb, yb, 0.0)), eta)
            obj = _Objective(model, grid, spec, pen)
            u_fix = np.where(la_, ua, np.where(lb_, ub, 0.0))
            u, ncg = _cg_inactive(obj, u_fix, ~(la_ | lb_), u, cg_rtol)
            g, Y, P = obj.gradient(u)
            mu = -g
            Z = model.lift(Y)
            if mixed is not None:
                w = np.where(pen[0], (pen[1] - Z) / eps, 0.0)
                nu = -sw * w / eps
            log.append({"iteration": it + 1, "cg": ncg,
                        "active_u": int(la_.sum() + lb_.sum()),
                        "active_w": int((wa | wb).sum()) if mixed is not None else 0})
    stat = obj.stationarity(u, g)
    sol = _finish(obj, u, stat, converged, len(log), log, mu=mu, nu=nu, w=w)
    return sol


# Model predictive control ==================================================
def _solution_basis(model, grid, sol, ell):
    snaps = SnapshotSet([sol.state, sol.adjoint], grid.alpha, WeightedSpace(model.M, "H"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compute_pod(snaps, rank=ell, strategy="svd")


@dataclass
class MpcResult:
    """Closed-loop trajectory, applied controls and the update log."""

    Y: np.ndarray
    U: np.ndarray
    grid: object
    mode: str
    updates: list
    log: list


def mpc_estimate(full, grid, spec, mixed, sol, variant="admissible"):
    """Perturbation estimate for a reduced open-loop solution ``(u, w)``.

    Works in the variables ``(u, y + eps w)`` whose constraints are boxes,
    with ``y`` the full-order state of ``u``. The gradient ``xi`` in these
    variables solves ``T* xi = grad J`` and the perturbation ``zeta``
    follows the active/inactive rule. Returns the norm of ``T* zeta =
    (zeta_u + S* zeta_w, eps zeta_w)`` in ``U x W`` divided by
    ``min(sigma, sigma_w)``.

    Parameters
    ----------
    variant : {"admissible", "reduced"}
        ``"admissible"`` projects ``y + eps w`` onto the state box, which
        makes the point admissible and the result a bound on the distance to
        the full-order optimum; the price is a factor ``1/eps`` on reduced
        state errors. ``"reduced"`` keeps the reduced ``w`` and takes the
        state sets from its sign; it is an indicator without a bound.
    """
    obj = _Objective(full, grid, spec)
    u = sol.u
    gu, Y, _ = obj.gradient(u)
    if mixed is None:
        return u_norm(grid, _zeta(gu, u, obj.ua, obj.ub)) / spec.sigma
    eps, sw, lm = mixed.eps, mixed.sigma_w, full.lumped
    if variant == "admissible":
        ya, yb = mixed.arrays(full.m, grid)
        wt = np.clip(Y + eps * sol.w, ya, yb)
        w = (wt - Y) / eps
        low, up = _active(wt, ya, yb)
    elif variant == "reduced":
        w = sol.w
        low, up = w > 0, w < 0
    else:
        raise ConfigError(f"unknown estimate variant {variant!r}")
    xi_w = sw * w / eps

    def s_star(b):
        R = -(grid.alpha * b) * lm[:, None]
        return obj.tracking_gradient(evolve.adjoint_sweep(full, grid, Y, R, np.zeros(full.m)))

    xi_u = gu - s_star(xi_w)
    zu = _zeta(xi_u, u, obj.ua, obj.ub)
    zw = np.where(low, -np.minimum(0.0, xi_w), np.where(up, -np.maximum(0.0, xi_w), -xi_w))
    a = zu + s_star(zw)
    e = np.sqrt(u_norm(grid, a) ** 2 + _w_norm(grid, lm, eps * zw) ** 2)
    return float(e / min(spec.sigma, sw))


def mpc_run(model, grid, spec, mixed=None, horizon=10, mode="full", ell=10, tau=None,
            tau_rel=0.03, estimate="reduced"):
    """Receding-horizon control with full or POD open-loop solves.

    Each horizon covers ``horizon + 1`` nodes of ``grid`` starting at the
    current node; the open-loop control at the next node is applied to the
    full-order plant for one step.

    Parameters
    ----------
    mode : {"full", "pod-no-update", "pod-update"}
        Reduced modes solve the first horizon with the full model and build
        the basis from its optimal state and adjoint. ``pod-update`` evaluates
        :func:`mpc_estimate` after each reduced solve and, if it exceeds the
        threshold, re-solves with the full model and rebuilds the basis from
        that solution.
    tau : float, optional
        Absolute threshold; otherwise ``tau_rel`` times the ``U``-norm of the
        reduced open-loop control.
    estimate : {"admissible", "reduced"}
        Variant of :func:`mpc_estimate`.
    """
    if mode not in ("full", "pod-no-update", "pod-update"):
        raise ConfigError(f"unknown MPC mode {mode!r}")
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    n = grid.n
    m_c = model.m_c
    Ycl = np.empty((model.m, n))
    Ucl = np.zeros((m_c, n))
    Ycl[:, 0] = model.y0
    basis = None
    updates, log = [], []
    for k in range(n - 1):
        stop = min(k + horizon, n - 1) + 1
        g = grid.window(k, stop)
        sk = spec.window(k, stop)
        mk = None if mixed is None else mixed.window(k, stop)
        plant = model.with_initial(Ycl[:, k])
        entry = {"step": k, "estimate": None, "tau": None, "updated": False}
        if mode == "full" or basis is None:
            sol = _open_loop(plant, g, sk, mk)
            if mode != "full":
                basis = _solution_basis(plant, g, sol, ell)
        else:
            rom = galerkin_project(plant, basis, ell=min(ell, basis.ell))
            sol = _open_loop(rom, g, sk, mk)
            if mode == "pod-update":
                e = mpc_estimate(plant, g, sk, mk, sol, estimate)
                thr = tau if tau is not None else tau_rel * u_norm(g, sol.u)
                entry.update(estimate=e, tau=thr)
                if e > thr:
                    sol = _open_loop(plant, g, sk, mk, sol.u)
                    basis = _solution_basis(plant, g, sol, ell)
                    updates.append(k)
                    entry["updated"] = True
        if not sol.converged:
            raise ConvergenceError(f"open-loop solve failed at MPC step {k}", step=k)
        if k == 0:
            Ucl[:, 0] = sol.u[:, 0]
        Ucl[:, k + 1] = sol.u[:, 1]
        step = evolve.solve_theta(plant, grid.window(k, k + 2), Ucl[:, k:k + 2])
        Ycl[:, k + 1] = step.Y[:, 1]
        log.append(entry)
    return MpcResult(Ycl, Ucl, grid, mode, updates, log)


# Pareto front ==============================================================
@dataclass
class ParetoFront:
    """Controls and images of the approximated front, ordered by ``J1``."""

    controls: list
    images: np.ndarray
    references: np.ndarray
    h_par: float
    h_perp: float
    alpha_ws: float
    log: list = field(default_factory=list)
    certificates: list = None

    @property
    def spacing(self):
        return np.linalg.norm(np.diff(self.images, axis=0), axis=1)


def nondominated(images, tol=0.0):
    """True when no image dominates another (``<=`` in both, ``<`` in one)."""
    P = np.asarray(images, dtype=float)
    for i in range(len(P)):
        for j in range(len(P)):
            if i != j and np.all(P[i] <= P[j] + tol) and np.any(P[i] < P[j] - tol):
                return False
    return True


def _images(obj, u):
    Y = obj.state_cached(u)
    return np.array(obj.parts(u, Y))


def _solve_reference(obj, z, u0, tol, max_iter):
    """Minimize ``F_z(u) = 1/2 |J(u) - z|^2`` by projected gradient (BB + Armijo)."""

    def value(u):
        d = _images(obj, u) - z
        return 0.5 * float(d @ d)

    def grad(u):
        J = _images(obj, u)
        P = obj.adjoint(obj.state_cached(u))
        return (J[0] - z[0]) * obj.tracking_gradient(P) + (J[1] - z[1]) * (u - obj.un)

    kappa = _images(obj, np.clip(u0, obj.ua, obj.ub))[1] - z[1]
    eta0 = 1.0 / kappa if kappa > 0 else 1.0
    u, f, g, stat, ok, it, log = _pg_core(value, grad, obj.ua, obj.ub, u0, obj.grid, eta0, tol,
                                          max_iter, True)
    return u, g, ok, it


def _solve_reference_ws(model, grid, spec, obj, z, beta0, u0):
    """Reference problem through its weighted-sum form.

    The minimizer of ``F_z`` minimizes ``J1 + beta J2`` with ``beta = (J2 -
    z2) / (J1 - z1)``; ``phi(beta) = (J2 - z2) - beta (J1 - z1)`` is strictly
    decreasing along the weighted-sum minimizers, so ``beta`` is found by
    bracketing and Brent's method in ``log beta``.
    """
    memo = {}

    def solve(lb):
        if lb not in memo:
            u = _weighted_sum(model, grid, spec, float(np.exp(lb)), u0)
            memo[lb] = (u, _images(obj, u))
        return memo[lb]

    def phi(lb):
        J = solve(lb)[1]
        return (J[1] - z[1]) - np.exp(lb) * (J[0] - z[0])

    lo = hi = np.log(beta0)
    f0 = phi(lo)
    if f0 == 0:
        return solve(lo)[0], float(np.exp(lo)), True
    step = 1.0 if f0 > 0 else -1.0
    for _ in range(80):
        hi = lo + step
        if np.sign(phi(hi)) != np.sign(f0):
            break
        lo = hi
    else:
        return solve(lo)[0], float(np.exp(lo)), False
    a, b = sorted((lo, hi))
    lb = optimize.brentq(phi, a, b, xtol=1e-14, rtol=1e-15, maxiter=200)
    return solve(lb)[0], float(np.exp(lb)), True


def _weighted_sum(model, grid, spec, beta, u0=None):
    ws = replace(spec, sigma=beta)
    if model.cubic:
        return projected_gradient_solve(model, grid, ws, u0, step="bb", tol=1e-11, max_iter=2000).u
    return pdass_solve(model, grid, ws, None, u0).u


def pareto_front(model, grid, spec, h_par, h_perp=0.0, alpha_ws=1e-3, max_points=20, tol=1e-10,
                 max_iter=2000, pod=None, solver="auto"):
    """Euclidean reference point method for ``(J1, J2)``.

    ``J1`` is the tracking part of ``spec`` and ``J2 = 1/2 ||u - un||_U^2``
    (``spec.sigma`` is not used). The front starts at the minimizer of
    ``J1 + alpha_ws J2`` and ends at the minimizer ``P(un)`` of ``J2``. Each
    new reference point moves ``h_par`` along the local tangent and
    ``h_perp`` along the local normal, so consecutive images are at most
    ``h_par`` apart. Reference points stop once they pass the end point;
    a remaining gap above ``h_par`` before the end point is filled with
    weighted-sum minimizers whose weights are bisected between the last
    point and the end.

    Parameters
    ----------
    solver : {"auto", "weighted", "pg"}
        ``"weighted"`` solves each reference problem through its weighted-sum
        form (linear models); ``"pg"`` runs projected gradient with
        Barzilai-Borwein steps on ``F_z``. ``"auto"`` picks the former for
        linear models.
    pod : dict, optional
        ``{"ell0", "ell_incr", "ell_max", "eps_max"}``: solve each reference
        problem with a reduced model, enlarging ``ell`` until the estimate
        ``2 ||zeta|| / (J2(u) - z2)`` is at most ``eps_max``. The basis is
        built from the full state and adjoint at the first front point.

    Returns
    -------
    ParetoFront
    """
    if not h_par > 0 or h_perp < 0 or not alpha_ws > 0:
        raise ConfigError("need h_par > 0, h_perp >= 0 and alpha_ws > 0")
    full = _full(model)
    fobj = _Objective(full, grid, spec)
    u1 = _weighted_sum(full, grid, spec, alpha_ws)
    u_end = np.clip(fobj.un, fobj.ua, fobj.ub)
    J1, J_end = _images(fobj, u1), _images(fobj, u_end)
    controls, images, refs, log, certs = [u1], [J1], [], [], []
    a = alpha_ws
    z = J1 + h_par * np.array([a, -1.0]) / np.hypot(a, 1.0) \
        + h_perp * np.array([-1.0, -a]) / np.hypot(a, 1.0)
    if solver == "auto":
        solver = "pg" if full.cubic else "weighted"
    if solver not in ("weighted", "pg"):
        raise ConfigError(f"unknown solver {solver!r}")
    beta = alpha_ws

    def reference(mod, obj, u_start):
        if solver == "weighted":
            u, b, ok = _solve_reference_ws(mod, grid, spec, obj, z, beta, u_start)
            return u, ok, b
        u, _, ok, it = _solve_reference(obj, z, u_start, tol, max_iter)
        J = _images(obj, u)
        return u, ok, (J[1] - z[1]) / (J[0] - z[0]) if J[0] > z[0] else beta

    basis, ell = None, None
    if pod is not None:
        basis = _state_adjoint_basis(full, grid, spec, u1, pod["ell_max"])
        ell = min(pod["ell0"], basis.ell)
    u_prev = u1
    while z[0] <= J_end[0] and len(controls) < max_points - 1:
        refs.append(z.copy())
        if basis is None:
            u, ok, beta_new = reference(full, fobj, u_prev)
            cert = None
        else:
            while True:
                rom = galerkin_project(full, basis, ell=ell)
                robj = _Objective(rom, grid, spec)
                u, ok, beta_new = reference(rom, robj, u_prev)
                Jf = _images(fobj, u)
                gz = (Jf[0] - z[0]) * fobj.tracking_gradient(fobj.adjoint(fobj.state_cached(u))) \
                    + (Jf[1] - z[1]) * (u - fobj.un)
                kap = Jf[1] - z[1]
                eta = 2.0 * u_norm(grid, _zeta(gz, u, fobj.ua, fobj.ub)) / kap if kap > 0 else np.inf
                if eta <= pod["eps_max"] or ell >= min(pod["ell_max"], basis.ell):
                    break
                ell = min(ell + pod["ell_incr"], basis.ell, pod["ell_max"])
            cert = {"ell": ell, "estimate": float(eta), "certified": bool(eta <= pod["eps_max"])}
        if not ok:
            log.append({"reference": z.tolist(), "skipped": True})
            break
        beta = beta_new
        J = _images(fobj, u)
        controls.append(u)
        images.append(J)
        certs.append(cert)
        log.append({"reference": z.tolist(), "beta": beta, "image": J.tolist()})
        perp = z - J
        par = np.array([-perp[1], perp[0]])
        z = z + h_par * par / np.linalg.norm(par) + h_perp * perp / np.linalg.norm(perp)
        u_prev = u
    # close the gap to the end point with weighted-sum points
    beta0 = beta
    tail = [(1.0, controls[-1], images[-1]), (0.0, u_end, J_end)]
    while len(controls) + len(tail) - 2 < max_points:
        gaps = [np.linalg.norm(tail[i + 1][2] - tail[i][2]) for i in range(len(tail) - 1)]
        i = int(np.argmax(gaps))
        if gaps[i] <= h_par:
            break
        s = 0.5 * (tail[i][0] + tail[i + 1][0])
        u = _weighted_sum(full, grid, spec, beta0 / s, tail[i][1])
        tail.insert(i + 1, (s, u, _images(fobj, u)))
        log.append({"weighted_sum": beta0 / s})
    for s, u, J in tail[1:]:
        controls.append(u)
        images.append(J)
        certs.append(None)
    return ParetoFront(controls, np.array(images), np.array(refs).reshape(-1, 2), h_par, h_perp,
                       alpha_ws, log, certs if pod is not None else None)
