"""Timing of the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from podctl import _kernels, fem


def _time(fun, repeat):
    fun()  # warm up (compilation for the numba path)
    return min(timeit.repeat(fun, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = []
    for res in ((33, 21), (129, 129)):
        mesh = fem.build_mesh(2, res)
        cases.append((f"p1_geometry {mesh.cells.shape[0]} cells",
                      lambda fl, mesh=mesh: _kernels.p1_geometry(mesh.points, mesh.cells, use_numba=fl)))
    for ell, n in ((10, 100), (40, 2000)):
        A = rng.standard_normal((ell, ell))
        Mr = A @ A.T + ell * np.eye(ell)
        G = np.linalg.inv(Mr + 0.01 * np.eye(ell))
        F = rng.standard_normal((ell, n))
        y0 = rng.standard_normal(ell)
        cases.append((f"reduced_sweep ell={ell} n={n}",
                      lambda fl, a=(G, Mr, F, y0): _kernels.reduced_sweep(*a, 0.01, use_numba=fl)))
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s} {'max diff':>9s}")
    for name, fun in cases:
        r0, r1 = fun(False), fun(True)
        diff = max(np.abs(np.asarray(a) - np.asarray(b)).max() for a, b in
                   zip(r0 if isinstance(r0, tuple) else (r0,), r1 if isinstance(r1, tuple) else (r1,)))
        t0 = _time(lambda: fun(False), args.repeat)
        t1 = _time(lambda: fun(True), args.repeat)
        print(f"{name:34s} {1e3 * t0:11.3f} {1e3 * t1:11.3f} {t0 / t1:9.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
