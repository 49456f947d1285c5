"""Optimal control setups used by the command line and the acceptance tests."""

import numpy as np

from . import fem
from .optctl import MixedConstraintSpec, OcpSpec

__all__ = ["guiding_ocp", "guiding_snapshot_control", "mpc_problem", "pareto_problem"]


def guiding_ocp(sigma=0.01, ub=(3.0, 5.0), target=18.0):
    """Track ``target`` in the room with both controls in ``[0, ub]``."""
    return OcpSpec(sigma1=1.0, sigma2=1.0, sigma=sigma, yd1=target, yd2=target, un=0.0, ua=0.0,
                   ub=np.asarray(ub, dtype=float)[:, None])


def guiding_snapshot_control(grid, ub=(3.0, 5.0)):
    """Mid-box control used to generate snapshots for the certified POD run."""
    return np.tile(0.5 * np.asarray(ub, dtype=float)[:, None], (1, grid.n))


def mpc_problem(resolution=(13, 13), T=2.5, n=51):
    """Boundary heating with a time-dependent lower state bound.

    Returns
    -------
    model, grid, OcpSpec, MixedConstraintSpec
    """
    model = fem.mpc_model(resolution)
    grid = fem.make_time_grid(T, n)
    spec = OcpSpec(sigma1=0.0, sigma2=0.0, sigma=1.0, un=0.0, ua=0.0, ub=1e7)
    mixed = MixedConstraintSpec(ya=lambda t: min(16.0 + t / 4.0, 18.0), yb=32.0, eps=1e-3,
                                sigma_w=1.0)
    return model, grid, spec, mixed


def pareto_problem(resolution=(17, 9), T=5.0, n=51):
    """Coarse room model with tracking versus control cost."""
    model = fem.guiding_model(resolution)
    grid = fem.make_time_grid(T, n)
    spec = OcpSpec(sigma1=1.0, sigma2=1.0, sigma=1.0, yd1=18.0, yd2=18.0, un=0.0, ua=0.0,
                   ub=np.array([[3.0], [5.0]]))
    return model, grid, spec
