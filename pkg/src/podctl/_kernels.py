"""Hot loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and the environment variable
``PODCTL_NUMBA`` is not set to ``0``. Both paths return identical shapes
and agree to rounding.
"""

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

USE_NUMBA = njit is not None and os.environ.get("PODCTL_NUMBA", "1") != "0"


def _p1_geometry_numpy(points, cells):
    p0 = points[cells[:, 0]]
    p1 = points[cells[:, 1]]
    p2 = points[cells[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    grads = np.empty((cells.shape[0], 3, 2))
    grads[:, 1, 0] = d2[:, 1] / det
    grads[:, 1, 1] = -d2[:, 0] / det
    grads[:, 2, 0] = -d1[:, 1] / det
    grads[:, 2, 1] = d1[:, 0] / det
    grads[:, 0, :] = -grads[:, 1, :] - grads[:, 2, :]
    return area, grads


def _reduced_sweep_numpy(G, Mr, F, y0, dt):
    ell, n = F.shape[0], F.shape[1]
    Y = np.empty((ell, n))
    Y[:, 0] = y0
    for j in range(1, n):
        Y[:, j] = G @ (Mr @ Y[:, j - 1] + dt * F[:, j])
    return Y


if USE_NUMBA:

    @njit(cache=True)
    def _p1_geometry_numba(points, cells):
        ne = cells.shape[0]
        area = np.empty(ne)
        grads = np.empty((ne, 3, 2))
        for e in range(ne):
            a = cells[e, 0]
            b = cells[e, 1]
            c = cells[e, 2]
            d1x = points[b, 0] - points[a, 0]
            d1y = points[b, 1] - points[a, 1]
            d2x = points[c, 0] - points[a, 0]
            d2y = points[c, 1] - points[a, 1]
            det = d1x * d2y - d1y * d2x
            area[e] = 0.5 * abs(det)
            grads[e, 1, 0] = d2y / det
            grads[e, 1, 1] = -d2x / det
            grads[e, 2, 0] = -d1y / det
            grads[e, 2, 1] = d1x / det
            grads[e, 0, 0] = -grads[e, 1, 0] - grads[e, 2, 0]
            grads[e, 0, 1] = -grads[e, 1, 1] - grads[e, 2, 1]
        return area, grads

    @njit(cache=True)
    def _reduced_sweep_numba(G, Mr, F, y0, dt):
        ell = F.shape[0]
        n = F.shape[1]
        Y = np.empty((ell, n))
        Y[:, 0] = y0
        tmp = np.empty(ell)
        for j in range(1, n):
            for i in range(ell):
                s = dt * F[i, j]
                for k in range(ell):
                    s += Mr[i, k] * Y[k, j - 1]
                tmp[i] = s
            for i in range(ell):
                s = 0.0
                for k in range(ell):
                    s += G[i, k] * tmp[k]
                Y[i, j] = s
        return Y


def p1_geometry(points, cells, use_numba=None):
    """Areas and barycentric gradients of P1 triangles.

    Parameters
    ----------
    points : (m, 2) ndarray
    cells : (ne, 3) int ndarray
    use_numba : bool, optional
        Override the module default.

    Returns
    -------
    area : (ne,) ndarray
    grads : (ne, 3, 2) ndarray
        Constant gradient of each local hat function.
    """
    points = np.ascontiguousarray(points, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and USE_NUMBA:
        return _p1_geometry_numba(points, cells)
    return _p1_geometry_numpy(points, cells)


def reduced_sweep(G, Mr, F, y0, dt, use_numba=None):
    """Implicit Euler sweep y_j = G (Mr y_{j-1} + dt F_j) for constant steps.

    ``G`` is the inverse of ``Mr + dt*Ar``; only used for small dense systems.
    """
    args = (np.ascontiguousarray(G, dtype=float), np.ascontiguousarray(Mr, dtype=float),
            np.ascontiguousarray(F, dtype=float), np.ascontiguousarray(y0, dtype=float),
            float(dt))
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and USE_NUMBA:
        return _reduced_sweep_numba(*args)
    return _reduced_sweep_numpy(*args)
