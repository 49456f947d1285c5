"""POD bases in weighted inner-product spaces.

A snapshot set holds ``K`` trajectories ``Y^k`` (``m x n``) with trajectory
weights ``omega_k`` and temporal weights ``alpha_j``. The POD basis of rank
``ell`` minimizes

    sum_k omega_k sum_j alpha_j || y_j^k - sum_i <y_j^k, psi_i>_W psi_i ||_W^2

over ``W``-orthonormal families. The weight is factored as ``W = L L^T`` so
that ``Y~ = L^T Y D^{1/2}`` carries the whole problem; three equivalent
strategies are offered (thin SVD of ``Y~``, eigenvalues of ``Y~ Y~^T`` or of
the snapshot Gram matrix ``Y~^T Y~``).
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import ConfigError, InternalConsistencyError

__all__ = [
    "WeightedSpace",
    "SnapshotSet",
    "PodBasis",
    "compute_pod",
    "projection_error",
    "pointwise_error_bound",
    "pod_greedy",
    "project",
    "lift",
    "difference_quotients",
    "principal_angles",
    "save_snapshots",
    "load_snapshots",
    "save_basis",
    "load_basis",
]

STRATEGIES = ("svd", "gram_m", "gram_snapshots")
RANK_RTOL = 1e-13


# Spaces and snapshot sets ==================================================
class WeightedSpace:
    """Coefficient space with inner product ``<u, v>_W = u^T W v``.

    Parameters
    ----------
    W : (m, m) array or sparse matrix, or int
        SPD weight; an integer ``m`` gives the Euclidean space.
    tag : str
        ``"H"``, ``"V"`` or ``"identity"`` (informational).
    """

    def __init__(self, W, tag=None):
        if np.isscalar(W):
            m = int(W)
            self.W = sp.identity(m, format="csr")
            tag = tag or "identity"
        else:
            self.W = sp.csr_matrix(W) if sp.issparse(W) else np.asarray(W, dtype=float)
        self.tag = tag or "custom"
        Wd = self.dense()
        if Wd.shape[0] != Wd.shape[1]:
            raise ConfigError("weight matrix must be square")
        scale = max(np.abs(Wd).max(), 1e-300)
        if np.abs(Wd - Wd.T).max() > 1e-13 * scale:
            raise ConfigError("weight matrix is not symmetric")
        try:
            self.L = la.cholesky(Wd, lower=True)
        except la.LinAlgError as exc:
            raise ConfigError("weight matrix is not positive definite") from exc

    @property
    def m(self):
        return self.L.shape[0]

    def dense(self):
        return self.W.toarray() if sp.issparse(self.W) else self.W

    def apply(self, X):
        return self.W @ X

    def inner(self, u, v):
        return u.T @ (self.W @ v)

    def norm(self, u):
        return np.sqrt(np.maximum(np.einsum("i...,i...->...", u, self.W @ u), 0.0))

    def half(self, X):
        """``L^T X``."""
        return self.L.T @ X

    def half_inverse(self, X):
        """Solve ``L^T Z = X``."""
        return la.solve_triangular(self.L, X, lower=True, trans="T")


def difference_quotients(Y, dt):
    """Difference-quotient block: zero first column, then ``(y_j - y_{j-1})/dt_j``."""
    D = np.zeros_like(Y, dtype=float)
    D[:, 1:] = np.diff(Y, axis=1) / np.asarray(dt, dtype=float)[1:]
    return D


@dataclass
class SnapshotSet:
    """Snapshot trajectories with weights.

    Attributes
    ----------
    blocks : list of (m, n) ndarray
    alpha : (n,) ndarray
        Temporal quadrature weights.
    space : WeightedSpace
    omega : (K,) ndarray, optional
        Trajectory weights, default ones.
    include_dq : bool
        Append the difference quotients of every block (same weights).
    dt : (n,) ndarray, optional
        Time steps, required with ``include_dq``.
    """

    blocks: list
    alpha: np.ndarray
    space: WeightedSpace
    omega: np.ndarray = None
    include_dq: bool = False
    dt: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(Y, dtype=float)) for Y in self.blocks]
        if self.blocks and self.blocks[0].shape[0] == 1 and self.space.m != 1:
            self.blocks = [Y.T for Y in self.blocks]
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if self.omega is None:
            self.omega = np.ones(len(self.blocks))
        self.omega = np.asarray(self.omega, dtype=float).reshape(-1)
        if not self.blocks:
            raise ConfigError("snapshot set needs at least one block")
        shapes = {Y.shape for Y in self.blocks}
        if len(shapes) != 1:
            raise ConfigError("all snapshot blocks must share their shape")
        m, n = self.blocks[0].shape
        if m != self.space.m or n != self.alpha.size or self.omega.size != len(self.blocks):
            raise ConfigError("snapshot dimensions do not match weights")
        if np.any(self.alpha <= 0) or np.any(self.omega <= 0):
            raise ConfigError("weights must be positive")
        if self.include_dq and self.dt is None:
            raise ConfigError("include_dq needs the time steps")

    @property
    def m(self):
        return self.space.m

    @property
    def n(self):
        return self.alpha.size

    def effective(self):
        """All columns and their weights ``omega_k alpha_j``."""
        if "eff" not in self._cache:
            cols = list(self.blocks)
            wts = [w * self.alpha for w in self.omega]
            if self.include_dq:
                cols += [difference_quotients(Y, self.dt) for Y in self.blocks]
                wts += [w * self.alpha for w in self.omega]
            self._cache["eff"] = (np.hstack(cols), np.concatenate(wts))
        return self._cache["eff"]

    def total_energy(self):
        Y, d = self.effective()
        return float(np.sum(d * np.einsum("ij,ij->j", Y, self.space.apply(Y))))


# Basis =====================================================================
@dataclass
class PodBasis:
    """``W``-orthonormal POD basis with eigenvalue bookkeeping.

    Attributes
    ----------
    vectors : (m, d) ndarray
        All basis vectors above the rank cutoff.
    eigenvalues : (d,) ndarray
        Descending eigenvalues of the POD operator.
    total_energy : float
        Weighted snapshot energy ``Lambda``.
    ell : int
        Active rank.
    space : WeightedSpace
    truncated : bool
        Set when the requested rank exceeded the numerical rank.
    """

    vectors: np.ndarray
    eigenvalues: np.ndarray
    total_energy: float
    ell: int
    space: WeightedSpace
    truncated: bool = False
    strategy: str = ""

    @property
    def rank(self):
        """Numerical rank ``d``."""
        return self.eigenvalues.size

    @property
    def psi(self):
        return self.vectors[:, :self.ell]

    def energy_ratio(self, ell=None):
        ell = self.ell if ell is None else ell
        if self.total_energy == 0:
            return 1.0
        return float(np.sum(self.eigenvalues[:ell]) / self.total_energy)

    def truncate(self, ell):
        """Nested basis of rank ``min(ell, d)`` sharing the vectors."""
        return PodBasis(self.vectors, self.eigenvalues, self.total_energy, min(int(ell), self.rank),
                        self.space, int(ell) > self.rank, self.strategy)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _cutoff(lam, rtol=None):
    if lam.size == 0 or lam[0] <= 0:
        return 0
    tol = max((RANK_RTOL if rtol is None else rtol) * lam[0], 1e-300)
    return int(np.sum(lam > tol))


def _choose_ell(lam, total, rank, tol):
    d = lam.size
    if rank is not None and tol is not None:
        raise ConfigError("give either a rank or a tolerance")
    if tol is not None:
        if not 0 < tol < 1:
            raise ConfigError("tolerance must lie in (0, 1)")
        ratio = np.cumsum(lam) / total
        hit = np.nonzero(ratio > 1.0 - tol)[0]
        return (int(hit[0]) + 1 if hit.size else d), False
    if rank is None:
        return d, False
    rank = int(rank)
    if rank < 0:
        raise ConfigError("rank must be nonnegative")
    return min(rank, d), rank > d


def compute_pod(snapshots, rank=None, tol=None, strategy="auto"):
    """POD basis of a snapshot set.

    Parameters
    ----------
    snapshots : SnapshotSet
    rank : int, optional
        Requested rank ``ell``.
    tol : float, optional
        Energy tolerance ``eps``; ``ell`` is the smallest rank with
        ``E(ell) > 1 - eps``.
    strategy : {"auto", "svd", "gram_m", "gram_snapshots"}
        ``auto`` uses the snapshot Gram matrix when it is the smaller one.

    Returns
    -------
    PodBasis
        Contains all ``d`` vectors above the cutoff ``1e-13 lambda_1``;
        ``ell`` selects the active part. ``truncated`` flags a requested rank
        above ``d``.
    """
    Y, d = snapshots.effective()
    space = snapshots.space
    m, N = Y.shape
    if strategy == "auto":
        strategy = "gram_snapshots" if N < m else "gram_m"
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    if not np.any(Y):
        raise ConfigError("all snapshots vanish; the basis would be empty")

    sq = np.sqrt(d)
    total = snapshots.total_energy()
    if strategy == "svd":
        Yt = space.half(Y) * sq
        U, s, _ = la.svd(Yt, full_matrices=False, lapack_driver="gesdd")
        lam = s ** 2
        # singular values are resolved to about RANK_RTOL s_1, eigenvalues of
        # squared matrices only to RANK_RTOL lambda_1
        k = _cutoff(lam, RANK_RTOL ** 2)
        V = space.half_inverse(U[:, :k])
    elif strategy == "gram_m":
        Yt = space.half(Y) * sq
        lam, U = la.eigh(Yt @ Yt.T)
        lam, U = lam[::-1], U[:, ::-1]
        k = _cutoff(lam)
        V = space.half_inverse(U[:, :k])
    else:
        WY = space.apply(Y)
        G = (sq[:, None] * (Y.T @ WY)) * sq[None, :]
        G = 0.5 * (G + G.T)
        lam, Phi = la.eigh(G)
        lam, Phi = lam[::-1], Phi[:, ::-1]
        k = _cutoff(lam)
        V = (Y * sq) @ Phi[:, :k] / np.sqrt(lam[:k])
    lam = lam[:k].copy()
    V = _fix_signs(V)
    ell, truncated = _choose_ell(lam, total, rank, tol)
    if truncated:
        warnings.warn(f"requested rank {rank} exceeds numerical rank {k}; truncated",
                      RuntimeWarning, stacklevel=2)
    return PodBasis(V, lam, total, ell, space, truncated, strategy)


def projection_error(snapshots, basis, ell=None):
    """Weighted squared projection error of a snapshot set onto ``ell`` vectors."""
    Y, d = snapshots.effective()
    ell = basis.ell if ell is None else ell
    if ell > basis.vectors.shape[1]:
        raise ConfigError("ell exceeds the basis size")
    R = Y - lift(basis, project(basis, Y, ell=ell), ell=ell)
    return float(np.sum(d * np.einsum("ij,ij->j", R, snapshots.space.apply(R))))


def pointwise_error_bound(basis, omega, alpha, ell=None):
    """Bound ``lambda_{ell+1} / (omega_k alpha_j)`` on one weighted column error."""
    ell = basis.ell if ell is None else ell
    if omega * alpha <= 0:
        raise ConfigError("weights must be positive")
    if ell >= basis.rank:
        return 0.0
    return float(basis.eigenvalues[ell] / (omega * alpha))


def project(basis, v, mode="orthogonal", ell=None, weight=None):
    """Reduced coefficients of ``v`` (vector or matrix of columns).

    Parameters
    ----------
    mode : {"orthogonal", "cross"}
        ``orthogonal`` returns ``Psi^T W v``. ``cross`` projects
        orthogonally with respect to another weight ``weight`` by solving
        the ``ell x ell`` Gram system ``Psi^T W_X Psi c = Psi^T W_X v``.
    """
    ell = basis.ell if ell is None else ell
    Psi = basis.vectors[:, :ell]
    if mode == "orthogonal":
        return Psi.T @ basis.space.apply(v)
    if mode != "cross":
        raise ConfigError(f"unknown projection mode {mode!r}")
    if weight is None:
        raise ConfigError("cross projection needs the target weight")
    WX = weight.W if isinstance(weight, WeightedSpace) else weight
    G = Psi.T @ (WX @ Psi)
    try:
        cf = la.cho_factor(0.5 * (G + G.T))
    except la.LinAlgError as exc:
        raise InternalConsistencyError("cross Gram matrix is singular") from exc
    return la.cho_solve(cf, Psi.T @ (WX @ v))


def lift(basis, c, ell=None):
    ell = basis.ell if ell is None else ell
    return basis.vectors[:, :ell] @ c


def principal_angles(A, B, space):
    """Principal angles between ``span(A)`` and ``span(B)`` in the ``W`` product."""
    QA = np.linalg.qr(space.half(A))[0]
    QB = np.linalg.qr(space.half(B))[0]
    s = la.svdvals(QA.T @ QB)
    return np.arccos(np.clip(s, -1.0, 1.0))


# POD-greedy ================================================================
def _gram_schmidt(V, space, start):
    """Orthonormalize columns ``start:`` against all previous ones (twice)."""
    W = space.W
    keep = list(range(start))
    for k in range(start, V.shape[1]):
        v = V[:, k].copy()
        for _ in range(2):
            if keep:
                Q = V[:, keep]
                v = v - Q @ (Q.T @ (W @ v))
        nv = float(np.sqrt(max(v @ (W @ v), 0.0)))
        if nv > 1e-12 * max(1.0, float(np.sqrt(max(V[:, k] @ (W @ V[:, k]), 0.0)))):
            V[:, k] = v / nv
            keep.append(k)
    return V[:, keep]


def _traj_errors(trajs, alpha, space, V):
    errs = []
    for Y in trajs:
        R = Y - V @ (V.T @ space.apply(Y)) if V.shape[1] else Y
        errs.append(float(np.sum(alpha * np.einsum("ij,ij->j", R, space.apply(R)))))
    return np.array(errs)


def pod_greedy(trajectories, alpha, space, eps, ell_max, strategy="auto"):
    """Greedy POD over several trajectories.

    At each step the trajectory with the largest error
    ``sum_j alpha_j ||y_j - P y_j||_W^2`` among the unused ones is chosen, a
    POD of its residual snapshots is appended with the smallest rank that
    drives that error below ``eps`` and the enlarged family is
    reorthonormalized by Gram-Schmidt in ``W``.

    Returns
    -------
    basis : PodBasis
        ``eigenvalues`` holds the residual-POD eigenvalues in the order the
        vectors were appended.
    info : dict
        ``errors`` (final per-trajectory errors), ``order`` (selected
        trajectories) and ``ranks`` (vectors added per step).
    """
    trajs = [np.asarray(Y, dtype=float) for Y in trajectories]
    alpha = np.asarray(alpha, dtype=float)
    V = np.zeros((space.m, 0))
    lams, order, ranks = [], [], []
    used = np.zeros(len(trajs), dtype=bool)
    total = sum(float(np.sum(alpha * np.einsum("ij,ij->j", Y, space.apply(Y)))) for Y in trajs)
    while True:
        errs = _traj_errors(trajs, alpha, space, V)
        if errs.max() <= eps or used.all() or V.shape[1] >= ell_max:
            break
        k = int(np.argmax(np.where(used, -np.inf, errs)))
        used[k] = True
        R = trajs[k] - V @ (V.T @ space.apply(trajs[k])) if V.shape[1] else trajs[k]
        if not np.any(R):
            continue
        sub = compute_pod(SnapshotSet([R], alpha, space), strategy=strategy)
        tail = np.concatenate([np.cumsum(sub.eigenvalues[::-1])[::-1][1:], [0.0]])
        ell_nu = int(np.argmax(tail <= eps)) + 1
        ell_nu = min(ell_nu, sub.rank, ell_max - V.shape[1])
        start = V.shape[1]
        V = _gram_schmidt(np.hstack([V, sub.vectors[:, :ell_nu]]), space, start)
        lams.extend(sub.eigenvalues[:V.shape[1] - start])
        order.append(k)
        ranks.append(V.shape[1] - start)
    errs = _traj_errors(trajs, alpha, space, V)
    basis = PodBasis(_fix_signs(V) if V.shape[1] else V, np.asarray(lams), total, V.shape[1], space,
                     strategy="greedy")
    return basis, {"errors": errs, "order": order, "ranks": ranks}


# IO ========================================================================
FLOAT_FMT = "%.17g"


def save_snapshots(path, snapshots):
    """CSV of the blocks side by side plus a JSON sidecar ``path + '.json'``."""
    np.savetxt(path, np.hstack(snapshots.blocks), delimiter=",", fmt=FLOAT_FMT)
    meta = {"K": len(snapshots.blocks), "n": snapshots.n, "omega": snapshots.omega.tolist(),
            "alpha": snapshots.alpha.tolist(), "weight": snapshots.space.tag,
            "include_dq": snapshots.include_dq,
            "dt": None if snapshots.dt is None else np.asarray(snapshots.dt).tolist()}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=1)


def load_snapshots(path, space):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    Y = np.loadtxt(path, delimiter=",", ndmin=2)
    n = meta["n"]
    blocks = [Y[:, k * n:(k + 1) * n] for k in range(meta["K"])]
    return SnapshotSet(blocks, np.array(meta["alpha"]), space, np.array(meta["omega"]),
                       meta["include_dq"], None if meta["dt"] is None else np.array(meta["dt"]))


def save_basis(path, basis):
    """Basis vectors as CSV and eigenvalue table ``path + '.eig.csv'``."""
    np.savetxt(path, basis.vectors, delimiter=",", fmt=FLOAT_FMT)
    lam = basis.eigenvalues
    ratio = np.cumsum(lam) / basis.total_energy if basis.total_energy else np.ones_like(lam)
    table = np.column_stack([np.arange(1, lam.size + 1), lam, ratio])
    np.savetxt(str(path) + ".eig.csv", table, delimiter=",", fmt=FLOAT_FMT,
               header="i,lambda,energy_ratio", comments="")


def load_basis(path, space, ell=None):
    V = np.loadtxt(path, delimiter=",", ndmin=2)
    tab = np.loadtxt(str(path) + ".eig.csv", delimiter=",", skiprows=1, ndmin=2)
    lam = tab[:, 1]
    total = float(lam.sum() / tab[-1, 2]) if tab[-1, 2] else 0.0
    return PodBasis(V, lam, total, V.shape[1] if ell is None else ell, space)
