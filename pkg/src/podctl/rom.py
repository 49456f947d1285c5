"""POD-Galerkin reduced models, (D)EIM and certified error quantities.

The reduced model uses ``M^l = Psi^T M Psi``, ``A^l(t) = Psi^T A(t) Psi``,
``B^l = Psi^T B`` and reduced loads. It speaks the same model protocol as
the full model, so the solvers in :mod:`podctl.evolve` run on both.

State a-posteriori bounds come from the residual
``r_j = M (y_j - y_{j-1})/dt_j + A_j y_j - f_j`` of the lifted reduced
solution and its dual norm ``sqrt(r^T W_V^{-1} r)``. Testing the error
equation with the error gives the recursion

    E_j = (E_{j-1} + dt_j ||r_j||_*^2 / gamma1) / (1 + gamma1 dt_j / c_V^2),

started at the exact initial error, which bounds ``||e_j||_M^2`` at every
node.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels, evolve
from .errors import ConfigError
from .pod import PodBasis, WeightedSpace, project

__all__ = [
    "RomModel",
    "DeimInterpolant",
    "ErrorReport",
    "galerkin_project",
    "solve_rom",
    "apriori_tail_sum",
    "riesz_dual_norm",
    "state_residuals",
    "aposteriori_state",
    "deim_build",
    "deim_apply",
    "aposteriori_gradient",
    "control_operator_norm",
]

TAIL_CASES = {1: "h_vnorm", 2: "h_cross", 3: "v_cross", 4: "v_plain"}


# Reduced model =============================================================
@dataclass
class RomModel:
    """Galerkin projection of a full model onto ``span(Psi)``."""

    psi: np.ndarray
    M: np.ndarray
    A0: np.ndarray
    C0: object
    adv_scale: object
    B: np.ndarray
    load_vectors: list
    load_times: list
    y0: np.ndarray
    full: object
    projection_mode: str = "orthogonal"
    deim: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def ell(self):
        return self.psi.shape[1]

    @property
    def cubic(self):
        return self.full.cubic

    @property
    def full_mass(self):
        return self.full.M

    def scale(self, t):
        return 0.0 if self.C0 is None else float(self.adv_scale(t))

    def stiffness(self, t):
        s = self.scale(t)
        return self.A0 if s == 0.0 else self.A0 + s * self.C0

    def loads(self, times):
        G = np.zeros((self.ell, len(times)))
        for c, b in zip(self.load_times, self.load_vectors):
            G += np.outer(b, [c(t) for t in times])
        return G

    def lift(self, Y):
        return self.psi @ Y

    def restrict(self, R):
        return self.psi.T @ R

    def _mpsi(self):
        if "MPsi" not in self._cache:
            self._cache["MPsi"] = self.full.M @ self.psi
        return self._cache["MPsi"]

    def nl(self, y):
        if self.deim is not None:
            return deim_apply(self.deim, y)
        return self.psi.T @ (self.full.M @ (self.psi @ y) ** 3)

    def nl_jac(self, y):
        if self.deim is not None:
            z = self.deim.PtPsi @ y
            return self.deim.W_hat @ ((3.0 * z ** 2)[:, None] * self.deim.PtPsi)
        z = self.psi @ y
        return self._mpsi().T @ ((3.0 * z ** 2)[:, None] * self.psi)

    def with_deim(self, interp):
        """Copy that evaluates the cubic term through ``interp``."""
        bound = interp.bind(self.psi, self.full.M)
        return replace(self, deim=bound, _cache={})


def galerkin_project(model, basis, projection_mode="orthogonal", ell=None, weight=None):
    """Reduced model on the first ``ell`` basis vectors.

    Parameters
    ----------
    model : FeModel
    basis : PodBasis or (m, l) ndarray
        An array is treated as Euclidean-orthonormal columns.
    projection_mode : {"orthogonal", "cross"}
        Initial value by ``Psi^T W y0`` or by the Gram system in ``weight``
        (default the mass matrix).
    """
    if isinstance(basis, np.ndarray):
        basis = PodBasis(basis, np.ones(basis.shape[1]), float(basis.shape[1]), basis.shape[1],
                         WeightedSpace(basis.shape[0]))
    ell = basis.ell if ell is None else int(ell)
    psi = np.ascontiguousarray(basis.vectors[:, :ell])
    if psi.shape[0] != model.m:
        raise ConfigError("basis and model dimensions differ")
    Mr = psi.T @ (model.M @ psi)
    A0r = psi.T @ (model.A0 @ psi)
    C0r = None if model.C0 is None else psi.T @ (model.C0 @ psi)
    Br = psi.T @ model.B
    lv = [psi.T @ b for b in model.load_vectors]
    if projection_mode == "orthogonal":
        y0r = project(basis, model.y0, "orthogonal", ell)
    elif projection_mode == "cross":
        y0r = project(basis, model.y0, "cross", ell, model.M if weight is None else weight)
    else:
        raise ConfigError(f"unknown projection mode {projection_mode!r}")
    return RomModel(psi, Mr, A0r, C0r, model.adv_scale, Br, lv, list(model.load_times), y0r,
                    model, projection_mode)


def solve_rom(rom, grid, u=None, y0=None, fast=True, loads=True):
    """Reduced implicit Euler solve (reduced coefficients).

    The constant-operator linear case on a uniform grid runs through the
    compiled sweep; everything else uses :mod:`podctl.evolve`.
    """
    if rom.cubic:
        if not loads:
            raise ConfigError("linearized solves need a linear model")
        return evolve.solve_semilinear(rom, grid, u, y0)
    steps = grid.dt[1:]
    const = rom.C0 is None or len({rom.scale(t) for t in grid.t[1:]}) == 1
    if fast and const and np.all(steps == steps[0]):
        F = evolve._forcing(rom, grid, u, loads)
        dt = float(steps[0])
        key = ("G", dt, rom.scale(grid.t[-1]))
        if key not in rom._cache:
            rom._cache[key] = la.inv(rom.M + dt * rom.stiffness(grid.t[-1]))
        start = rom.y0 if y0 is None else np.asarray(y0, dtype=float)
        Y = _kernels.reduced_sweep(rom._cache[key], rom.M, F, start, dt)
        return evolve.Trajectory(Y, grid, "state")
    return evolve.solve_theta(rom, grid, u, 1.0, y0, loads)


# A-priori tails ============================================================
def _weight(w):
    if isinstance(w, WeightedSpace):
        return w.W
    return w


def apriori_tail_sum(basis, case, ell=None, other=None):
    """Tail sums of the a-priori estimates (without constants).

    Parameters
    ----------
    basis : PodBasis
        Computed in ``H`` for cases 1-2 and in ``V`` for cases 3-4.
    case : int or str
        1 ``"h_vnorm"``: ``sum lambda_i^H ||psi_i^H||_V^2``;
        2 ``"h_cross"``: ``sum lambda_i^H ||psi_i^H - P_V psi_i^H||_V^2``;
        3 ``"v_cross"``: ``sum lambda_i^V ||psi_i^V - Q_H psi_i^V||_V^2``;
        4 ``"v_plain"``: ``sum lambda_i^V``. Sums run over ``i > ell``.
        ``P_V`` (``Q_H``) is the ``V``- (``H``-) orthogonal projection onto the
        first ``ell`` vectors.
    other : matrix or WeightedSpace
        ``V`` weight for cases 1-2, ``H`` weight for case 3.
    """
    case = TAIL_CASES.get(case, case)
    ell = basis.ell if ell is None else int(ell)
    lam = basis.eigenvalues[ell:]
    T = basis.vectors[:, ell:]
    if case == "v_plain":
        return float(lam.sum())
    if other is None:
        raise ConfigError("this case needs the second weight")
    Wo = _weight(other)
    if case == "h_vnorm":
        return float(np.sum(lam * np.einsum("ij,ij->j", T, Wo @ T)))
    P = basis.vectors[:, :ell]
    if case == "h_cross":
        WP, WV = Wo, Wo
    elif case == "v_cross":
        WP, WV = Wo, basis.space.W
    else:
        raise ConfigError(f"unknown tail case {case!r}")
    if ell:
        G = P.T @ (WP @ P)
        R = T - P @ la.solve(G, P.T @ (WP @ T), assume_a="pos")
    else:
        R = T
    return float(np.sum(lam * np.einsum("ij,ij->j", R, WV @ R)))


# Dual norms and residuals ==================================================
def _wv_factor(model_or_weight):
    if isinstance(model_or_weight, WeightedSpace):
        L = model_or_weight.L
        return lambda R: la.solve_triangular(L, R, lower=True)
    if hasattr(model_or_weight, "W_V"):
        cache = model_or_weight._cache
        if "WVlu" not in cache:
            cache["WVlu"] = spla.splu(sp.csc_matrix(model_or_weight.W_V))
        lu = cache["WVlu"]
        return ("solve", lu)
    W = model_or_weight
    if sp.issparse(W):
        return ("solve", spla.splu(sp.csc_matrix(W)))
    L = la.cholesky(np.asarray(W, dtype=float), lower=True)
    return lambda R: la.solve_triangular(L, R, lower=True)


def riesz_dual_norm(model, r):
    """``sqrt(r^T W_V^{-1} r)`` for a vector or each column of a matrix.

    ``model`` may be a FeModel (its ``W_V``), a WeightedSpace or a matrix.
    """
    r = np.asarray(r, dtype=float)
    fac = _wv_factor(model)
    if isinstance(fac, tuple):
        Z = fac[1].solve(r)
        val = np.einsum("i...,i...->...", r, Z)
    else:
        Z = fac(r)
        val = np.einsum("i...,i...->...", Z, Z)
    return np.sqrt(np.maximum(val, 0.0))


def state_residuals(model, grid, Ylift, u=None):
    """Residual vectors ``r_j`` (columns ``1..n-1``; column 0 is zero)."""
    F = evolve._forcing(model, grid, u)
    n = grid.n
    R = np.zeros_like(Ylift)
    R[:, 1:] = model.M @ (np.diff(Ylift, axis=1) / grid.dt[1:])
    for j in range(1, n):
        R[:, j] += model.stiffness(grid.t[j]) @ Ylift[:, j]
    R[:, 1:] -= F[:, 1:]
    if model.cubic:
        R[:, 1:] += model.M @ (Ylift[:, 1:] ** 3)
    return R


@dataclass
class ErrorReport:
    """Nodewise a-posteriori bounds with optional true errors.

    Attributes
    ----------
    t : (n,) ndarray
    bound : (n,) ndarray
        Bounds on ``||y_j - y_j^l||_M``.
    bound_V : float
        Bound on ``sum_j alpha_j ||y_j - y_j^l||_V^2``.
    residuals : (n,) ndarray
        Dual norms of the residuals.
    closed_form_bound : (n,) ndarray
        The exponential-decay form ``exp(-2 gamma1 (j-1) dt / c_V^2) / gamma1
        * Dt * sum_l ||r_l||_*^2`` (square root), reported for comparison.
    true_error, true_V, efficiency : optional
    constants : dict
    """

    t: np.ndarray
    bound: np.ndarray
    bound_V: float
    residuals: np.ndarray
    closed_form_bound: np.ndarray
    constants: dict
    true_error: np.ndarray = None
    true_V: float = None

    @property
    def efficiency(self):
        if self.true_error is None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.true_error > 0, self.bound / self.true_error, np.inf)

    def rigorous(self, rtol=1e-6, atol=1e-14):
        """True when every attached true error lies below its bound."""
        if self.true_error is None:
            return True
        ok = np.all(self.true_error <= self.bound * (1 + rtol) + atol)
        if self.true_V is not None:
            ok = ok and self.true_V <= self.bound_V * (1 + rtol) + atol
        return bool(ok)

    def to_csv(self, path):
        eff = self.efficiency
        true = np.full(self.t.size, np.nan) if self.true_error is None else self.true_error
        eff = np.full(self.t.size, np.nan) if eff is None else eff
        table = np.column_stack([np.arange(self.t.size), self.t, self.bound, true, eff,
                                 self.closed_form_bound])
        np.savetxt(path, table, delimiter=",", fmt="%.17g",
                   header="node,t,bound,true_error,efficiency,closed_form_bound", comments="")


def aposteriori_state(model, rom, grid, u=None, Yr=None, reference=None, gamma1=None, c_V=None,
                      c_hat=0.0):
    """Residual-based error bounds for a reduced trajectory.

    Parameters
    ----------
    model : FeModel
        Needs ``gamma1`` (or the argument) and ``c_V``.
    rom : RomModel
    u : (m_c, n) ndarray, optional
    Yr : (l, n) ndarray, optional
        Reduced solution; computed when omitted.
    reference : (m, n) ndarray, optional
        Full-order solution for true errors and efficiencies.
    c_hat : float
        Growth constant of the semilinear variant (no rigor claim).

    Returns
    -------
    ErrorReport
    """
    g1 = model.gamma1 if gamma1 is None else gamma1
    cV = model.c_V if c_V is None else c_V
    if g1 is None or cV is None:
        raise ConfigError("coercivity constant gamma1 and embedding constant c_V are required")
    if not g1 > 0:
        raise ConfigError("gamma1 must be positive for the a-posteriori bounds")
    if Yr is None:
        Yr = solve_rom(rom, grid, u).Y
    Z = rom.lift(Yr)
    R = state_residuals(model, grid, Z, u)
    q = riesz_dual_norm(model, R) ** 2
    e0 = model.y0 - Z[:, 0]
    E1 = float(e0 @ (model.M @ e0))
    n, dt = grid.n, grid.dt
    E = np.empty(n)
    E[0] = E1
    if model.cubic:
        grow = 1.0 + c_hat * grid.dt_max
        for j in range(1, n):
            l = np.arange(1, j + 1)
            E[j] = grow ** j * E1 + np.sum(grow ** (j + 1 - l) * dt[l] * q[l]) / g1
    else:
        for j in range(1, n):
            E[j] = (E[j - 1] + dt[j] * q[j] / g1) / (1.0 + g1 * dt[j] / cV ** 2)
    ratio = np.max(grid.alpha[1:] / dt[1:])
    e0V = float(e0 @ (model.W_V @ e0))
    bound_V = grid.alpha[0] * e0V + ratio * (E1 + np.sum(dt[1:] * q[1:]) / g1) / g1
    cum = np.cumsum(q)
    closed = np.sqrt(np.exp(-2.0 * g1 * np.arange(n) * grid.dt_min / cV ** 2) / g1
                   * grid.dt_max * cum)
    rep = ErrorReport(grid.t.copy(), np.sqrt(E), float(bound_V), np.sqrt(q), closed,
                      {"gamma1": g1, "c_V": cV, "zeta_ratio": grid.zeta_ratio, "c_hat": c_hat})
    if reference is not None:
        D = np.asarray(reference) - Z
        rep.true_error = np.sqrt(np.maximum(np.einsum("ij,ij->j", D, model.M @ D), 0.0))
        rep.true_V = float(np.sum(grid.alpha * np.einsum("ij,ij->j", D, model.W_V @ D)))
    return rep


# (D)EIM ====================================================================
@dataclass
class DeimInterpolant:
    """Collateral basis with interpolation indices.

    ``W_hat = Psi^T M Phi (P^T Phi)^{-1}`` and ``PtPsi = P^T Psi`` are set
    by :meth:`bind`.
    """

    Phi: np.ndarray
    indices: np.ndarray
    lu: tuple
    cond: float
    variant: str
    ill_conditioned: bool = False
    W_hat: np.ndarray = None
    PtPsi: np.ndarray = None

    @property
    def p(self):
        return self.indices.size

    def coefficients(self, values):
        """Solve ``(P^T Phi) c = values``."""
        return la.lu_solve(self.lu, values)

    def reconstruct(self, v):
        """Interpolant ``Phi (P^T Phi)^{-1} v[idx]`` of full vectors (columns)."""
        return self.Phi @ self.coefficients(np.asarray(v)[self.indices])

    def bind(self, psi, M):
        PtPhi = self.Phi[self.indices]
        W_hat = la.solve(PtPhi.T, (psi.T @ (M @ self.Phi)).T).T
        return replace(self, W_hat=W_hat, PtPsi=psi[self.indices].copy())


def _deim_indices(U):
    idx = [int(np.argmax(np.abs(U[:, 0])))]
    for l in range(1, U.shape[1]):
        c = la.solve(U[idx, :l], U[idx, l])
        r = U[:, l] - U[:, :l] @ c
        idx.append(int(np.argmax(np.abs(r))))
    return np.array(idx, dtype=np.int64)


def _eim(F, p):
    cols = []
    idx = []
    res = F.copy()
    for _ in range(p):
        k = int(np.argmax(np.abs(res).max(axis=0)))
        xi = res[:, k]
        i = int(np.argmax(np.abs(xi)))
        if xi[i] == 0:
            break
        cols.append(xi / xi[i])
        idx.append(i)
        Phi = np.column_stack(cols)
        C = la.solve_triangular(Phi[idx], F[idx], lower=True, unit_diagonal=True)
        res = F - Phi @ C
    return np.column_stack(cols), np.array(idx, dtype=np.int64)


def deim_build(F, p, variant="deim"):
    """Interpolant of the nonlinearity snapshots ``F`` (``m x n_s``).

    DEIM takes the first ``p`` left singular vectors of ``F`` (identity
    weight) and picks each index where the interpolation residual of the next
    vector is largest in magnitude. EIM greedily takes the snapshot with the
    largest max-norm residual, its largest entry and scales the residual to
    one there, so ``P^T Phi`` is unit lower triangular.
    """
    F = np.asarray(F, dtype=float)
    if not np.any(F):
        raise ConfigError("nonlinearity snapshots vanish")
    if variant == "deim":
        U, s, _ = la.svd(F, full_matrices=False)
        rank = int(np.sum(s > max(1e-13 * s[0], 1e-300)))
        if p > rank:
            raise ConfigError(f"p = {p} exceeds the snapshot rank {rank}")
        from .pod import _fix_signs

        Phi = _fix_signs(U[:, :p])
        idx = _deim_indices(Phi)
    elif variant == "eim":
        if p > F.shape[1]:
            raise ConfigError("p exceeds the number of snapshots")
        Phi, idx = _eim(F, p)
        if idx.size < p:
            raise ConfigError("snapshots are exhausted before p points")
    else:
        raise ConfigError(f"unknown variant {variant!r}")
    PtPhi = Phi[idx]
    cond = float(np.linalg.cond(PtPhi, 1))
    bad = not np.isfinite(cond) or cond > 1e12
    return DeimInterpolant(Phi, idx, la.lu_factor(PtPhi), cond, variant, bad)


def deim_apply(interp, y):
    """Reduced cubic term ``W_hat N(P^T Psi y)``; needs a bound interpolant."""
    if interp.W_hat is None:
        raise ConfigError("interpolant is not bound to a reduced basis")
    z = interp.PtPsi @ y
    return interp.W_hat @ (z ** 3)


# Gradient estimate =========================================================
def control_operator_norm(model):
    """``sup |B^T e| / ||e||_V``, the square root of ``lambda_max(B^T W_V^{-1} B)``."""
    if "Bnorm" not in model._cache:
        lu = _wv_factor(model)[1]
        X = lu.solve(model.B)
        G = model.B.T @ X
        model._cache["Bnorm"] = float(np.sqrt(max(la.eigvalsh(0.5 * (G + G.T)).max(), 0.0)))
    return model._cache["Bnorm"]


def aposteriori_gradient(model, rom, grid, u, spec, gamma1=None, c_V=None, details=False):
    """Bound on ``||grad J^h(u) - grad J^l(u)||_U`` for linear models.

    The lifted reduced adjoint leaves a residual ``rho_j`` in the full
    adjoint recursion; the adjoint error is driven by ``rho_j`` and by the
    state error, whose ``H`` bound comes from :func:`aposteriori_state`.
    With ``G_j = ||rho_j||_* + c_V (sigma1 alpha_j d_j + [j=n] sigma2 d_n)``

        Delta = ||B'|| sqrt(max_j(dt_j / alpha_j) sum_j G_j^2 / (gamma1^2 dt_j)).

    Returns
    -------
    float or (float, dict)
    """
    if model.cubic:
        raise ConfigError("the gradient estimate is available for linear models only")
    g1 = model.gamma1 if gamma1 is None else gamma1
    cV = model.c_V if c_V is None else c_V
    if g1 is None or cV is None or not g1 > 0:
        raise ConfigError("positive gamma1 and c_V are required")
    Yr = solve_rom(rom, grid, u).Y
    srep = aposteriori_state(model, rom, grid, u, Yr, gamma1=g1, c_V=cV)
    Pr = evolve.solve_adjoint(rom, grid, evolve.Trajectory(Yr, grid), spec).Y
    Yl, Pl = rom.lift(Yr), rom.lift(Pr)
    Rsrc, term = evolve.tracking_terms(model, grid, Yl, spec)
    n = grid.n
    rho = np.zeros_like(Pl)
    nxt = np.zeros(model.m)
    for j in range(n - 1, 0, -1):
        E = model.M + grid.dt[j] * model.stiffness(grid.t[j])
        rho[:, j] = E.T @ Pl[:, j] - model.M @ nxt - Rsrc[:, j]
        if j == n - 1:
            rho[:, j] -= term
        nxt = Pl[:, j]
    rn = riesz_dual_norm(model, rho)
    G = rn.copy()
    G += cV * spec.sigma1 * grid.alpha * srep.bound
    G[-1] += cV * spec.sigma2 * srep.bound[-1]
    dt = grid.dt[1:]
    S = np.sum(G[1:] ** 2 / (g1 ** 2 * dt))
    delta = control_operator_norm(model) * np.sqrt(np.max(dt / grid.alpha[1:]) * S)
    if details:
        return float(delta), {"dual_residuals": rn, "state_bound": srep.bound, "G": G}
    return float(delta)
