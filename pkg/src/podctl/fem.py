"""Structured P1 finite elements for parabolic model problems.

Meshes live on an interval or on the unit square (two triangles per cell).
Assembly produces the mass matrix ``M``, the Laplacian stiffness ``K``, an
advection matrix ``C`` (midpoint rule), a Robin boundary matrix ``Q``, the
control input matrix ``B`` and load vectors. Presets reproduce the heating
room example, a cubic semilinear variant, a 1D heat problem and the
``cos`` snapshot examples.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import _kernels
from .errors import ConfigError, InternalConsistencyError

__all__ = [
    "Mesh",
    "TimeGrid",
    "FeModel",
    "build_mesh",
    "make_time_grid",
    "assemble_model",
    "coercivity_constant",
    "guiding_model",
    "semilinear_model",
    "mpc_model",
    "heat_1d_model",
    "cos_example",
    "GUIDING_CONTROLS",
]

BOUNDARY_LABELS_2D = ("gamma1", "gamma2", "gamma3", "gamma4", "left", "right")


# Mesh ======================================================================
@dataclass
class Mesh:
    """Structured simplicial mesh.

    Attributes
    ----------
    dim : int
        1 or 2.
    points : (m, dim) ndarray
        Vertex coordinates.
    cells : (ne, dim+1) int ndarray
        Element connectivity.
    edges : dict
        Boundary facets per label. In 2D an ``(nb, 2)`` array of vertex
        pairs, in 1D a ``(nb, 1)`` array of endpoint vertices.
    vertex_labels : dict
        Label -> boundary vertex indices; the labels partition the boundary
        vertices.
    h : float
        Largest element diameter.
    shape : tuple
        Vertices per axis.
    """

    dim: int
    points: np.ndarray
    cells: np.ndarray
    edges: dict
    vertex_labels: dict
    h: float
    shape: tuple

    @property
    def m(self):
        return self.points.shape[0]

    def measure(self):
        """Total length (1D) or area (2D) of the elements."""
        if self.dim == 1:
            x = self.points[:, 0]
            return float(np.sum(np.abs(x[self.cells[:, 1]] - x[self.cells[:, 0]])))
        area, _ = _kernels.p1_geometry(self.points, self.cells)
        return float(area.sum())


def build_mesh(dimension, resolution, domain_bounds=None):
    """Build a structured mesh.

    Parameters
    ----------
    dimension : {1, 2}
    resolution : int or tuple of int
        Vertices per axis, at least 2.
    domain_bounds : sequence, optional
        ``(a, b)`` in 1D or ``((x0, x1), (y0, y1))`` in 2D; defaults to the
        unit interval/square.

    Returns
    -------
    Mesh
    """
    if dimension not in (1, 2):
        raise ConfigError("dimension must be 1 or 2")
    res = np.atleast_1d(np.asarray(resolution, dtype=int))
    if res.size == 1:
        res = np.repeat(res, dimension)
    if res.size != dimension or np.any(res < 2):
        raise ConfigError("resolution must be at least 2 per axis")

    if dimension == 1:
        a, b = (0.0, 1.0) if domain_bounds is None else map(float, domain_bounds)
        x = np.linspace(a, b, res[0])
        cells = np.column_stack([np.arange(res[0] - 1), np.arange(1, res[0])])
        edges = {"left": np.array([[0]]), "right": np.array([[res[0] - 1]])}
        labels = {"left": np.array([0]), "right": np.array([res[0] - 1])}
        return Mesh(1, x[:, None], cells, edges, labels, float(np.max(np.diff(x))), (int(res[0]),))

    if domain_bounds is None:
        (x0, x1), (y0, y1) = (0.0, 1.0), (0.0, 1.0)
    else:
        (x0, x1), (y0, y1) = domain_bounds
    nx, ny = int(res[0]), int(res[1])
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    v0 = (j * nx + i).ravel()
    v1, v2 = v0 + 1, v0 + nx
    v3 = v2 + 1
    cells = np.empty((2 * v0.size, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v0, v1, v3])
    cells[1::2] = np.column_stack([v0, v3, v2])

    bottom = np.column_stack([np.arange(nx - 1), np.arange(1, nx)])
    top = bottom + (ny - 1) * nx
    left = np.column_stack([np.arange(ny - 1) * nx, np.arange(1, ny) * nx])
    right = left + nx - 1
    # segments of the room geometry, relative to the domain height
    h_rel = lambda e: (points[e, 1].mean(axis=1) - y0) / (y1 - y0)
    edges = {
        "gamma1": left[h_rel(left) >= 0.75],
        "gamma2": right[h_rel(right) <= 0.25],
        "gamma3": bottom,
        "gamma4": top,
        "left": left[h_rel(left) < 0.75],
        "right": right[h_rel(right) > 0.25],
    }
    labels, seen = {}, set()
    for name in BOUNDARY_LABELS_2D:
        v = [k for k in np.unique(edges[name]) if k not in seen]
        seen.update(v)
        labels[name] = np.array(sorted(v), dtype=np.int64)
    hx = (x1 - x0) / (nx - 1)
    hy = (y1 - y0) / (ny - 1)
    return Mesh(2, points, cells, edges, labels, float(np.hypot(hx, hy)), (nx, ny))


# Time grid =================================================================
@dataclass
class TimeGrid:
    """Time nodes ``t_1 = t0 < ... < t_n`` with trapezoidal weights.

    ``dt[j] = t[j] - t[j-1]`` for ``j >= 1`` and ``dt[0] = 0``. The weights
    are ``alpha[0] = dt[1]/2``, ``alpha[j] = (dt[j] + dt[j+1])/2`` and
    ``alpha[-1] = dt[-1]/2``.
    """

    t: np.ndarray
    dt: np.ndarray
    alpha: np.ndarray

    @property
    def n(self):
        return self.t.size

    @property
    def T(self):
        return float(self.t[-1] - self.t[0])

    @property
    def dt_min(self):
        return float(self.dt[1:].min())

    @property
    def dt_max(self):
        return float(self.dt[1:].max())

    @property
    def zeta_ratio(self):
        return self.dt_max / self.dt_min

    def window(self, start, stop):
        """Sub-grid on nodes ``start .. stop-1`` (weights recomputed)."""
        return _grid_from(self.t[start:stop], self.dt[start + 1:stop])


def _grid_from(t, steps):
    t = np.asarray(t, dtype=float)
    dt = np.zeros(t.size)
    dt[1:] = steps
    alpha = np.zeros(t.size)
    alpha[:-1] += 0.5 * dt[1:]
    alpha[1:] += 0.5 * dt[1:]
    return TimeGrid(t, dt, alpha)


def make_time_grid(T, n, spacing="uniform", t0=0.0):
    """Time grid on ``[t0, t0 + T]`` with ``n`` nodes.

    Parameters
    ----------
    T : float
        Horizon length, positive.
    n : int
        Number of nodes, at least 2.
    spacing : "uniform" or array_like
        Either uniform spacing or the explicit node vector (then ``T`` and
        ``n`` must match it).

    Returns
    -------
    TimeGrid
    """
    if not T > 0 or int(n) < 2:
        raise ConfigError("need T > 0 and n >= 2")
    n = int(n)
    if isinstance(spacing, str):
        if spacing != "uniform":
            raise ConfigError(f"unknown spacing {spacing!r}")
        t = t0 + np.linspace(0.0, T, n)
        t[-1] = t0 + T
        # equal steps keep a single factorization per model
        return _grid_from(t, np.full(n - 1, T / (n - 1)))
    t = np.asarray(spacing, dtype=float)
    if t.size != n or np.any(np.diff(t) <= 0):
        raise ConfigError("nodes must be strictly increasing with length n")
    if abs((t[-1] - t[0]) - T) > 1e-12 * T:
        raise ConfigError("node span does not match T")
    return _grid_from(t, np.diff(t))


# Model =====================================================================
@dataclass
class FeModel:
    """Assembled linear (or cubic semilinear) parabolic model.

    The stiffness is ``A(t) = A0 + s(t) C0`` with ``A0 = kappa K + Q`` and
    the load is ``g(t) = sum_k c_k(t) b_k``.
    """

    mesh: Mesh
    kappa: float
    M: sp.csr_matrix
    K: sp.csr_matrix
    Q: sp.csr_matrix
    C0: object
    adv_scale: object
    B: np.ndarray
    load_vectors: list
    load_times: list
    y0: np.ndarray
    gamma1: float = None
    gamma2: float = 0.0
    c_V: float = 1.0
    cubic: bool = False
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def m(self):
        return self.M.shape[0]

    @property
    def m_c(self):
        return self.B.shape[1]

    @property
    def A0(self):
        if "A0" not in self._cache:
            self._cache["A0"] = (self.kappa * self.K + self.Q).tocsr()
        return self._cache["A0"]

    @property
    def W_V(self):
        if "WV" not in self._cache:
            self._cache["WV"] = (self.M + self.K).tocsr()
        return self._cache["WV"]

    @property
    def lumped(self):
        """Row sums of the mass matrix (nodal quadrature weights)."""
        if "lumped" not in self._cache:
            self._cache["lumped"] = np.asarray(self.M.sum(axis=1)).ravel()
        return self._cache["lumped"]

    def scale(self, t):
        return 0.0 if self.C0 is None else float(self.adv_scale(t))

    def stiffness(self, t):
        """Sparse ``A(t)``."""
        s = self.scale(t)
        if s == 0.0:
            return self.A0
        key = ("A", s)
        if key not in self._cache:
            self._cache[key] = (self.A0 + s * self.C0).tocsr()
        return self._cache[key]

    def load(self, t):
        g = np.zeros(self.m)
        for c, b in zip(self.load_times, self.load_vectors):
            g += c(t) * b
        return g

    def loads(self, times):
        """Load vectors at several times as an ``(m, n)`` array."""
        G = np.zeros((self.m, len(times)))
        for c, b in zip(self.load_times, self.load_vectors):
            G += np.outer(b, [c(t) for t in times])
        return G

    # protocol shared with reduced models
    @property
    def full_mass(self):
        return self.M

    def lift(self, Y):
        return Y

    def restrict(self, R):
        return R

    def nl(self, y):
        """Nodal cubic term ``M N(y)``."""
        return self.M @ (y ** 3)

    def nl_jac(self, y):
        return self.M @ sp.diags(3.0 * y ** 2)

    def with_initial(self, y0):
        """Shallow copy with a different initial coefficient vector."""
        other = FeModel(**{k: getattr(self, k) for k in self.__dataclass_fields__ if k != "_cache"})
        other._cache = self._cache
        other.y0 = np.asarray(y0, dtype=float).copy()
        return other


def _p1_1d(mesh, kappa_unused=None):
    x = mesh.points[:, 0]
    c = mesh.cells
    h = x[c[:, 1]] - x[c[:, 0]]
    ml = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    kl = np.array([[1.0, -1.0], [-1.0, 1.0]])
    rows = np.repeat(c, 2, axis=1).ravel()
    cols = np.tile(c, 2).ravel()
    Mv = (h[:, None, None] * ml).ravel()
    Kv = (kl / h[:, None, None]).ravel()
    m = mesh.m
    M = sp.coo_matrix((Mv, (rows, cols)), shape=(m, m)).tocsr()
    K = sp.coo_matrix((Kv, (rows, cols)), shape=(m, m)).tocsr()
    return M, K, h


def _local_index(cells):
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, k).ravel()
    return rows, cols


def _edge_values(mesh, spec):
    """Piecewise constant boundary coefficient per labelled facet."""
    out = {}
    for name, e in mesh.edges.items():
        if callable(spec):
            if mesh.dim == 1:
                mids = mesh.points[e[:, 0]]
            else:
                mids = mesh.points[e].mean(axis=1)
            out[name] = np.asarray([spec(name, p) for p in mids], dtype=float)
        else:
            out[name] = np.full(len(e), float((spec or {}).get(name, 0.0)))
    return out


def _boundary_mass(mesh, coeff):
    """``int_Gamma q phi_i phi_j ds`` and ``int_Gamma q phi_i ds``."""
    m = mesh.m
    rows, cols, vals = [], [], []
    vec = np.zeros(m)
    for name, e in mesh.edges.items():
        q = coeff[name]
        if e.size == 0:
            continue
        if mesh.dim == 1:
            idx = e[:, 0]
            rows.append(idx)
            cols.append(idx)
            vals.append(q)
            np.add.at(vec, idx, q)
            continue
        L = np.linalg.norm(mesh.points[e[:, 1]] - mesh.points[e[:, 0]], axis=1)
        ml = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        rows.append(np.repeat(e, 2, axis=1).ravel())
        cols.append(np.tile(e, 2).ravel())
        vals.append(((q * L)[:, None, None] * ml).ravel())
        np.add.at(vec, e[:, 0], 0.5 * q * L)
        np.add.at(vec, e[:, 1], 0.5 * q * L)
    if rows:
        Q = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, m)).tocsr()
    else:
        Q = sp.csr_matrix((m, m))
    return Q, vec


def _domain_vector(mesh, fun):
    """``int_Omega f phi_i dx`` with the element midpoint rule."""
    m = mesh.m
    vec = np.zeros(m)
    if mesh.dim == 1:
        x = mesh.points[:, 0]
        c = mesh.cells
        mid = 0.5 * (x[c[:, 0]] + x[c[:, 1]])
        w = np.abs(x[c[:, 1]] - x[c[:, 0]]) * np.asarray(fun(mid[:, None]), dtype=float) / 2
        np.add.at(vec, c[:, 0], w)
        np.add.at(vec, c[:, 1], w)
        return vec
    area, _ = _kernels.p1_geometry(mesh.points, mesh.cells)
    cent = mesh.points[mesh.cells].mean(axis=1)
    w = area * np.asarray(fun(cent), dtype=float) / 3.0
    for k in range(3):
        np.add.at(vec, mesh.cells[:, k], w)
    return vec


def _boundary_vector(mesh, labels, value):
    coeff = {name: np.full(len(e), value if name in labels else 0.0) for name, e in mesh.edges.items()}
    return _boundary_mass(mesh, coeff)[1]


def advection_matrix(mesh, velocity):
    """``C_ij = int (v . grad phi_j) phi_i dx`` with the midpoint rule.

    Parameters
    ----------
    velocity : callable
        Maps ``(k, dim)`` points to ``(k, dim)`` velocities.
    """
    m = mesh.m
    if mesh.dim == 1:
        x = mesh.points[:, 0]
        c = mesh.cells
        h = x[c[:, 1]] - x[c[:, 0]]
        mid = 0.5 * (x[c[:, 0]] + x[c[:, 1]])
        v = np.asarray(velocity(mid[:, None]), dtype=float).reshape(-1)
        g = np.column_stack([-1.0 / h, 1.0 / h])
        loc = 0.5 * h[:, None, None] * (v[:, None] * g)[:, None, :] * np.ones((1, 2, 1))
        rows, cols = _local_index(c)
        return sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(m, m)).tocsr()
    area, grads = _kernels.p1_geometry(mesh.points, mesh.cells)
    cent = mesh.points[mesh.cells].mean(axis=1)
    v = np.asarray(velocity(cent), dtype=float)
    vg = np.einsum("ed,ejd->ej", v, grads)
    loc = (area / 3.0)[:, None, None] * np.broadcast_to(vg[:, None, :], (len(area), 3, 3))
    rows, cols = _local_index(mesh.cells)
    return sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(m, m)).tocsr()


def assemble_model(mesh, kappa, velocity=None, q_boundary=None, shape_functions=(), loads=(),
                   y0=0.0, cubic=False, gamma1=None, gamma2=0.0, c_V=1.0, name="custom",
                   check=True):
    """Assemble a P1 model.

    Parameters
    ----------
    mesh : Mesh
    kappa : float
        Diffusivity, positive.
    velocity : tuple (v0, s), optional
        ``v0`` maps points to velocities and ``s(t)`` scales it in time.
    q_boundary : dict or callable, optional
        Robin coefficient per boundary label, or ``q(label, midpoint)``.
    shape_functions : sequence
        Control shapes, each ``("domain", f)`` with ``f`` evaluated at
        points or ``("boundary", labels, value)``.
    loads : sequence
        Each ``("robin", c)`` for ``c(t) int q phi_i ds`` or
        ``("domain", f, c)`` for ``c(t) int f phi_i dx``.
    y0 : float, ndarray or callable
        Initial data; callables are interpolated at the vertices.

    Returns
    -------
    FeModel
    """
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    coeff = _edge_values(mesh, q_boundary)
    if any(np.any(v < 0) for v in coeff.values()):
        raise ConfigError("Robin coefficient must be nonnegative")

    if mesh.dim == 1:
        M, K, _ = _p1_1d(mesh)
    else:
        area, grads = _kernels.p1_geometry(mesh.points, mesh.cells)
        rows, cols = _local_index(mesh.cells)
        Kl = area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
        Ml = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
        m = mesh.m
        M = sp.coo_matrix((Ml.ravel(), (rows, cols)), shape=(m, m)).tocsr()
        K = sp.coo_matrix((Kl.ravel(), (rows, cols)), shape=(m, m)).tocsr()
    Q, qvec = _boundary_mass(mesh, coeff)

    C0, scale = None, None
    if velocity is not None:
        v0, scale = velocity
        C0 = advection_matrix(mesh, v0)

    cols = []
    for spec in shape_functions:
        if spec[0] == "domain":
            cols.append(_domain_vector(mesh, spec[1]))
        elif spec[0] == "boundary":
            cols.append(_boundary_vector(mesh, set(spec[1]), float(spec[2])))
        else:
            raise ConfigError(f"unknown shape function kind {spec[0]!r}")
    B = np.column_stack(cols) if cols else np.zeros((mesh.m, 0))

    lv, lt = [], []
    for spec in loads:
        if spec[0] == "robin":
            lv.append(qvec.copy())
            lt.append(spec[1])
        elif spec[0] == "domain":
            lv.append(_domain_vector(mesh, spec[1]))
            lt.append(spec[2])
        else:
            raise ConfigError(f"unknown load kind {spec[0]!r}")

    if callable(y0):
        y0v = np.asarray(y0(mesh.points), dtype=float).reshape(-1)
    else:
        y0v = np.broadcast_to(np.asarray(y0, dtype=float), (mesh.m,)).copy()

    model = FeModel(mesh, float(kappa), M, K, Q, C0, scale, B, lv, lt, y0v, gamma1, gamma2,
                    c_V, cubic, name)
    if check:
        _check_model(model)
    return model


def _check_model(model):
    for mat, label in ((model.M, "mass"), (model.W_V, "V-weight")):
        try:
            np.linalg.cholesky(mat.toarray())
        except np.linalg.LinAlgError as exc:
            raise InternalConsistencyError(f"{label} matrix is not SPD") from exc
    if model.B.shape[1] and np.any(np.all(model.B == 0, axis=0)):
        raise InternalConsistencyError("control matrix has a zero column")


def coercivity_constant(model, times=None):
    """Smallest ``gamma`` with ``x.A(t)x >= gamma ||x||_V^2`` on the grid.

    ``sym A(s)`` is affine in the advection scale ``s`` and the smallest
    generalized eigenvalue is concave in ``s``, so evaluating the extreme
    scales covers every time node.
    """
    WV = model.W_V.toarray()
    if model.C0 is None or times is None:
        scales = [0.0 if model.C0 is None else model.scale(0.0)]
    else:
        s = np.array([model.scale(t) for t in times])
        scales = sorted({float(s.min()), float(s.max())})
    gam = np.inf
    for s in scales:
        A = model.A0 if model.C0 is None else model.A0 + s * model.C0
        A = A.toarray()
        lam = la.eigh(0.5 * (A + A.T), WV, eigvals_only=True, subset_by_index=[0, 0])
        gam = min(gam, float(lam[0]))
    return gam


# Presets ===================================================================
GUIDING_CONTROLS = ("u1", "u2", "u3")


def _rotation(points):
    return np.column_stack([points[:, 1] - 0.5, 0.5 - points[:, 0]])


def _omega1(points):
    x, y = points[:, 0], points[:, 1]
    inx = ((x >= 0.2) & (x <= 0.4)) | ((x >= 0.6) & (x <= 0.8))
    return np.where(inx & (y <= 0.1), 0.1, 0.0)


def guiding_q(name, midpoint=None):
    if name in ("gamma1", "gamma2"):
        return 0.1
    if name in ("gamma3", "gamma4"):
        return 0.0
    return 0.01


def guiding_model(resolution=(33, 21), kappa=0.5, velocity=1.0, time_factor=(1.0, 0.0), y0=17.0,
                  y_out=None, controls=("distributed", "boundary"), T=5.0, gamma1=None):
    """Heating room example on the unit square.

    Parameters
    ----------
    resolution : tuple of int
        Vertices per axis; ``ny - 1`` divisible by 4 aligns the window and
        heater segments with the grid.
    velocity : float
        Magnitude ``c`` of the rotation field ``c (x2 - 0.5, 0.5 - x1)``.
    time_factor : (a, b)
        The field is scaled by ``a + b t``.
    y_out : callable, optional
        Outside temperature; defaults to ``13 + 5 cos(2 pi t / 5)``.
    controls : sequence
        Subset of ``"distributed"`` (indicator 0.1 on the heater region)
        and ``"boundary"`` (0.1 on the left window segment).
    gamma1 : float, optional
        Coercivity constant; computed numerically when omitted.
    """
    mesh = build_mesh(2, resolution)
    if y_out is None:
        y_out = lambda t: 13.0 + 5.0 * np.cos(2.0 * np.pi * t / 5.0)
    shapes = []
    for c in controls:
        if c == "distributed":
            shapes.append(("domain", _omega1))
        elif c == "boundary":
            shapes.append(("boundary", ("gamma1",), 0.1))
        else:
            raise ConfigError(f"unknown control {c!r}")
    vel = None
    if velocity:
        a, b = time_factor
        vel = (lambda p: velocity * _rotation(p), lambda t: a + b * t)
    model = assemble_model(mesh, kappa, vel, guiding_q, shapes, [("robin", y_out)], y0,
                           name="guiding")
    grid_times = np.linspace(0.0, T, 3)
    model.gamma1 = coercivity_constant(model, grid_times) if gamma1 is None else gamma1
    return model


def guiding_control(kind, grid, T=5.0):
    """The three reference controls of the heating example, ``(2, n)``."""
    base = np.array([1.8, 4.5])[:, None]
    if kind == "u1":
        return np.zeros((2, grid.n))
    if kind == "u2":
        return np.repeat(base, grid.n, axis=1)
    if kind == "u3":
        return base * (1.0 - np.cos(2.0 * np.pi * grid.t / T))[None, :]
    raise ConfigError(f"unknown control {kind!r}")


def semilinear_model(resolution=(17, 17), kappa=0.5, q=0.1, y0=None, gamma1=None):
    """Cubic reaction variant: ``M y' + A y + M N(y) = B u`` without load."""
    mesh = build_mesh(2, resolution)
    if y0 is None:
        y0 = lambda p: p[:, 0] + p[:, 1]
    shapes = [("domain", _omega1), ("boundary", ("gamma1",), 0.1)]
    qb = {name: q for name in BOUNDARY_LABELS_2D}
    model = assemble_model(mesh, kappa, None, qb, shapes, (), y0, cubic=True, name="semilinear")
    model.gamma1 = coercivity_constant(model) if gamma1 is None else gamma1
    return model


def mpc_model(resolution=(13, 13), kappa=0.5, velocity=1.0, y0=16.0, gamma1=None):
    """Room example with boundary heating only and a time varying field.

    The outside temperature is ``15 + (1/2 + cos(pi t))(1/2 + sin(pi t)/2)``
    and the rotation field is scaled by ``0.1 + 0.1 t``.
    """
    y_out = lambda t: 15.0 + (0.5 + np.cos(np.pi * t)) * (0.5 + 0.5 * np.sin(np.pi * t))
    model = guiding_model(resolution, kappa, velocity, (0.1, 0.1), y0, y_out, ("boundary",),
                          gamma1=1.0)
    model.name = "mpc"
    model.gamma1 = coercivity_constant(model, np.linspace(0.0, 5.0, 3)) if gamma1 is None else gamma1
    return model


def heat_1d_model(m=20, kappa=1.0, q=(1.0, 0.5), velocity=0.0, cubic=False, y0=None,
                  gamma1=None):
    """Heat equation on ``(0, 1)`` with Robin ends and two controls.

    Controls: indicator of ``[0.2, 0.5]`` and a point control at ``x = 0``.
    """
    mesh = build_mesh(1, m)
    if y0 is None:
        y0 = lambda p: np.sin(np.pi * p[:, 0]) + 0.5
    shapes = [("domain", lambda p: ((p[:, 0] >= 0.2) & (p[:, 0] <= 0.5)).astype(float)),
              ("boundary", ("left",), 1.0)]
    vel = None
    if velocity:
        vel = (lambda p: np.full((p.shape[0], 1), velocity), lambda t: 1.0)
    loads = [("domain", lambda p: np.cos(np.pi * p[:, 0]), lambda t: np.sin(t))]
    model = assemble_model(mesh, kappa, vel, {"left": q[0], "right": q[1]}, shapes, loads, y0,
                           cubic=cubic, name="heat1d")
    model.gamma1 = coercivity_constant(model) if gamma1 is None else gamma1
    return model


def interval_mass(x, rule="consistent"):
    """1D P1 mass matrix on nodes ``x`` (``"trapezoid"`` lumps it)."""
    mesh = Mesh(1, np.asarray(x, dtype=float)[:, None],
                np.column_stack([np.arange(len(x) - 1), np.arange(1, len(x))]), {}, {}, 0.0,
                (len(x),))
    M = _p1_1d(mesh)[0]
    if rule == "trapezoid":
        return sp.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()
    if rule != "consistent":
        raise ConfigError(f"unknown mass rule {rule!r}")
    return M


def cos_example(kind, nx=50, nt=50, rule="consistent"):
    """Snapshot matrices of the separable ``cos`` examples.

    Parameters
    ----------
    kind : {"cos_cos", "cos_sum", "cos_prod"}
        ``cos(t) cos(x)`` and ``cos(t + x)`` on ``(0, 2 pi)^2``, or
        ``cos(t x)`` for ``t`` in ``(0, 1)`` and ``x`` in ``(0, 2 pi)``.
    nx, nt : int
        Space and time nodes.
    rule : {"consistent", "trapezoid"}
        Spatial weight matrix.

    Returns
    -------
    Y : (nx, nt) ndarray
    W : sparse matrix
    grid : TimeGrid
    """
    x = np.linspace(0.0, 2.0 * np.pi, nx)
    T = 1.0 if kind == "cos_prod" else 2.0 * np.pi
    grid = make_time_grid(T, nt)
    t = grid.t
    if kind == "cos_cos":
        Y = np.outer(np.cos(x), np.cos(t))
    elif kind == "cos_sum":
        Y = np.cos(x[:, None] + t[None, :])
    elif kind == "cos_prod":
        Y = np.cos(np.outer(x, t))
    else:
        raise ConfigError(f"unknown cos example {kind!r}")
    return Y, interval_mass(x, rule), grid
