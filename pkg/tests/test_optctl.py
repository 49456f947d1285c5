import numpy as np
import pytest

from podctl import evolve, fem, optctl, presets, rom
from podctl.errors import ConfigError


@pytest.fixture(scope="module")
def small():
    model = fem.guiding_model((9, 9))
    grid = fem.make_time_grid(5.0, 26)
    return model, grid


def test_spec_validation():
    with pytest.raises(ConfigError):
        optctl.OcpSpec(sigma=0.0)
    with pytest.raises(ConfigError):
        optctl.OcpSpec(sigma2=1.0)
    with pytest.raises(ConfigError):
        optctl.OcpSpec(ua=1.0, ub=0.0).arrays(2, fem.make_time_grid(1.0, 3))
    with pytest.raises(ConfigError):
        optctl.MixedConstraintSpec(ya=0.0, yb=1.0, eps=0.0)


def test_cost_without_tracking_is_control_cost(small):
    model, grid = small
    spec = optctl.OcpSpec(sigma1=0.0, sigma2=0.0, sigma=2.0, un=1.0)
    u = np.zeros((model.m_c, grid.n))
    expected = 0.5 * 2.0 * model.m_c * grid.alpha.sum()
    assert optctl.cost(model, grid, u, spec) == pytest.approx(expected)
    sol = optctl.pdass_solve(model, grid, spec)
    assert np.allclose(sol.u, 1.0)


def test_zero_control_operator():
    model = fem.heat_1d_model(10)
    model.B = np.zeros_like(model.B)
    grid = fem.make_time_grid(1.0, 6)
    spec = optctl.OcpSpec(sigma=0.5, yd1=1.0, un=0.3)
    # the state does not depend on u, so the optimum is the prior control
    g = optctl.reduced_gradient(model, grid, np.zeros((2, grid.n)), spec)
    assert np.allclose(g, -0.5 * 0.3)
    assert np.allclose(optctl.pdass_solve(model, grid, spec).u, 0.3)


def test_equal_bounds_fix_the_control(small):
    model, grid = small
    spec = optctl.OcpSpec(yd1=18.0, ua=0.7, ub=0.7)
    for sol in (optctl.pdass_solve(model, grid, spec),
                optctl.projected_gradient_solve(model, grid, spec)):
        assert np.allclose(sol.u, 0.7)


def test_hessian_matches_gradient_difference(small):
    model, grid = small
    spec = optctl.OcpSpec(yd1=18.0, yd2=18.0, sigma=0.1)
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal((2, model.m_c, grid.n))
    g1 = optctl.reduced_gradient(model, grid, u + v, spec)
    g0 = optctl.reduced_gradient(model, grid, u, spec)
    assert np.allclose(optctl.hessvec(model, grid, v, spec), g1 - g0, rtol=1e-9, atol=1e-9)


def test_pdass_matches_projected_gradient_with_active_box(small):
    model, grid = small
    spec = presets.guiding_ocp(sigma=0.01)
    a = optctl.pdass_solve(model, grid, spec)
    b = optctl.projected_gradient_solve(model, grid, spec, step="bb", tol=1e-11, max_iter=5000)
    assert a.converged and b.converged
    assert optctl.u_norm(grid, a.u - b.u) < 1e-6
    _, ua, ub = spec.arrays(model.m_c, grid)
    assert np.all((a.u >= ua) & (a.u <= ub))
    # some bound is active at the optimum
    assert np.any(np.isclose(a.u, ub)) or np.any(np.isclose(a.u, ua))


def test_variational_inequality_at_optimum(small):
    model, grid = small
    spec = presets.guiding_ocp(sigma=0.01)
    sol = optctl.pdass_solve(model, grid, spec)
    g = optctl.reduced_gradient(model, grid, sol.u, spec)
    _, ua, ub = spec.arrays(model.m_c, grid)
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = ua + rng.random(ua.shape) * (ub - ua)
        assert optctl.u_inner(grid, g, v - sol.u) >= -1e-9


def test_certificate_is_zero_at_full_optimum(small):
    model, grid = small
    spec = presets.guiding_ocp(sigma=0.1)
    sol = optctl.pdass_solve(model, grid, spec)
    _, bound = optctl.aposteriori_control(model, grid, sol.u, spec)
    assert bound < 1e-8


def test_certified_pod_meets_tolerance(small):
    model, grid = small
    spec = presets.guiding_ocp(sigma=0.1)
    ref = optctl.pdass_solve(model, grid, spec)
    sol = optctl.certified_pod_optimize(model, grid, spec, ell0=2, ell_max=20, eps_apo=1e-4,
                                        u_init=presets.guiding_snapshot_control(grid))
    assert sol.certificate["bound"] <= 1e-4
    assert optctl.u_norm(grid, sol.u - ref.u) <= sol.certificate["bound"]


def test_mixed_constraints_feasible():
    model, grid, spec, mixed = presets.mpc_problem(T=0.5, n=11)
    sol = optctl.pdass_solve(model, grid, spec, mixed)
    ya, yb = mixed.arrays(model.m, grid)
    slack = mixed.eps * np.abs(sol.w).max() + 1e-8
    assert sol.converged
    assert np.all(sol.state >= ya - slack) and np.all(sol.state <= yb + slack)
    assert np.all(sol.mu is None or np.isfinite(sol.mu))


def test_mpc_with_full_horizon_is_open_loop():
    model, grid, spec, mixed = presets.mpc_problem(T=0.5, n=11)
    res = optctl.mpc_run(model, grid, spec, mixed, horizon=grid.n, mode="full")
    sol = optctl.pdass_solve(model, grid, spec, mixed)
    assert np.allclose(res.U, sol.u, rtol=1e-6, atol=1e-6 * np.abs(sol.u).max())


def test_mpc_rejects_unknown_mode():
    model, grid, spec, mixed = presets.mpc_problem(T=0.5, n=11)
    with pytest.raises(ConfigError):
        optctl.mpc_run(model, grid, spec, mixed, mode="other")


def test_pareto_front_small():
    model, grid, spec = presets.pareto_problem((9, 5), T=5.0, n=26)
    front = optctl.pareto_front(model, grid, spec, h_par=8.0, h_perp=1.0, max_points=20)
    assert optctl.nondominated(front.images)
    assert front.spacing.max() <= 8.0 + 1e-9
    J = np.asarray(front.images)
    assert np.all(np.diff(J[:, 0]) > 0) and np.all(np.diff(J[:, 1]) < 0)


def test_nondominated_helper():
    assert optctl.nondominated([[0.0, 1.0], [1.0, 0.0]])
    assert not optctl.nondominated([[0.0, 0.0], [1.0, 1.0]])


def test_reduced_controls_work_on_rom(small):
    model, grid = small
    spec = presets.guiding_ocp(sigma=0.1)
    u = presets.guiding_snapshot_control(grid)
    Y = evolve.solve_state(model, grid, u).Y
    r = rom.galerkin_project(model, np.linalg.qr(Y)[0])
    assert optctl.cost(r, grid, u, spec) == pytest.approx(optctl.cost(model, grid, u, spec),
                                                          rel=1e-10)
