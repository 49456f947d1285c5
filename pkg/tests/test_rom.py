import warnings

import numpy as np
import pytest

from podctl import evolve, fem, optctl, pod, rom
from podctl.errors import ConfigError


@pytest.fixture(scope="module")
def setup():
    model = fem.guiding_model((9, 9))
    grid = fem.make_time_grid(5.0, 41)
    u = fem.guiding_control("u3", grid)
    Y = evolve.solve_state(model, grid, u).Y
    space = pod.WeightedSpace(model.M, "H")
    basis = pod.compute_pod(pod.SnapshotSet([Y], grid.alpha, space), strategy="svd")
    return model, grid, u, Y, basis


def test_full_rank_rom_reproduces_state(setup):
    model, grid, u, Y, basis = setup
    r = rom.galerkin_project(model, basis, ell=basis.rank)
    Yr = rom.solve_rom(r, grid, u).Y
    assert np.abs(r.lift(Yr) - Y).max() < 1e-8 * np.abs(Y).max()


def test_full_basis_is_exact_for_any_control(setup):
    model, grid, u, Y, basis = setup
    psi = np.eye(model.m)
    r = rom.galerkin_project(model, psi)
    v = np.random.default_rng(0).standard_normal(u.shape)
    assert np.allclose(r.lift(rom.solve_rom(r, grid, v).Y), evolve.solve_state(model, grid, v).Y,
                       atol=1e-10)


def test_fast_and_generic_sweeps_agree(setup):
    model, grid, u, Y, basis = setup
    r = rom.galerkin_project(model, basis, ell=5)
    a = rom.solve_rom(r, grid, u, fast=True).Y
    b = rom.solve_rom(r, grid, u, fast=False).Y
    assert np.allclose(a, b, rtol=1e-11, atol=1e-11)


@pytest.mark.parametrize("ell", [2, 4, 8])
def test_state_bound_dominates(setup, ell):
    model, grid, u, Y, basis = setup
    r = rom.galerkin_project(model, basis, ell=ell)
    rep = rom.aposteriori_state(model, r, grid, u, reference=Y)
    assert rep.rigorous()
    assert rep.bound_V >= rep.true_V * (1 - 1e-8)
    assert np.all(rep.efficiency[rep.true_error > 0] >= 1 - 1e-8)


def test_error_report_csv(tmp_path, setup):
    model, grid, u, Y, basis = setup
    rep = rom.aposteriori_state(model, rom.galerkin_project(model, basis, ell=3), grid, u, reference=Y)
    rep.to_csv(tmp_path / "r.csv")
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "node,t,bound,true_error,efficiency,closed_form_bound"


def test_gradient_bound_dominates(setup):
    model, grid, u, Y, basis = setup
    spec = optctl.OcpSpec(sigma1=1.0, sigma2=1.0, sigma=0.1, yd1=18.0, yd2=18.0)
    g = optctl.reduced_gradient(model, grid, u, spec)
    for ell in (2, 5):
        r = rom.galerkin_project(model, basis, ell=ell)
        gr = optctl.reduced_gradient(r, grid, u, spec)
        err = optctl.u_norm(grid, g - gr)
        assert err <= rom.aposteriori_gradient(model, r, grid, u, spec)


def test_riesz_dual_norm_oracle(setup):
    model = setup[0]
    r = np.random.default_rng(1).standard_normal((model.m, 3))
    WV = model.W_V.toarray()
    exact = np.sqrt(np.einsum("ij,ij->j", r, np.linalg.solve(WV, r)))
    assert np.allclose(rom.riesz_dual_norm(model, r), exact, rtol=1e-12)
    assert np.allclose(rom.riesz_dual_norm(WV, r), exact, rtol=1e-12)
    assert np.allclose(rom.riesz_dual_norm(pod.WeightedSpace(WV), r), exact, rtol=1e-12)


def test_tail_sums(setup):
    model, grid, u, Y, basis = setup
    WV = model.W_V
    V = basis.vectors
    lam = basis.eigenvalues
    direct = np.sum(lam[3:] * np.einsum("ij,ij->j", V[:, 3:], WV @ V[:, 3:]))
    assert rom.apriori_tail_sum(basis, 1, 3, WV) == pytest.approx(direct, rel=1e-12)
    assert rom.apriori_tail_sum(basis, "v_plain", 3) == pytest.approx(lam[3:].sum())
    # the V-projection residual never exceeds the plain V norm
    assert rom.apriori_tail_sum(basis, 2, 3, WV) <= direct * (1 + 1e-12)
    Vspace = pod.WeightedSpace(WV, "V")
    vb = pod.compute_pod(pod.SnapshotSet([Y], grid.alpha, Vspace), strategy="svd")
    snaps = pod.SnapshotSet([Y], grid.alpha, Vspace)
    assert rom.apriori_tail_sum(vb, 4, 3) == pytest.approx(pod.projection_error(snaps, vb, 3),
                                                            rel=1e-8)
    with pytest.raises(ConfigError):
        rom.apriori_tail_sum(basis, 1, 3)


# DEIM ======================================================================
@pytest.fixture(scope="module")
def cubic():
    model = fem.semilinear_model((9, 9))
    grid = fem.make_time_grid(1.0, 41)
    u = np.ones((model.m_c, grid.n))
    Y = evolve.solve_state(model, grid, u).Y
    return model, grid, u, Y


def test_deim_exact_at_indices_and_inside_span(cubic):
    Y = cubic[3]
    F = Y ** 3
    interp = rom.deim_build(F, 6)
    approx = interp.reconstruct(F)
    assert np.allclose(approx[interp.indices], F[interp.indices], rtol=1e-12, atol=1e-14)
    v = interp.Phi @ np.arange(1.0, 7.0)
    assert np.allclose(interp.reconstruct(v), v, atol=1e-12)
    assert not interp.ill_conditioned


def test_eim_is_unit_lower_triangular(cubic):
    F = cubic[3] ** 3
    interp = rom.deim_build(F, 6, "eim")
    T = interp.Phi[interp.indices]
    assert np.allclose(np.diag(T), 1.0)
    assert np.allclose(np.triu(T, 1), 0.0, atol=1e-14)
    approx = interp.reconstruct(F)
    assert np.allclose(approx[interp.indices], F[interp.indices], rtol=1e-12, atol=1e-14)


def test_deim_rejects_bad_input(cubic):
    F = cubic[3] ** 3
    with pytest.raises(ConfigError):
        rom.deim_build(np.zeros((5, 3)), 1)
    with pytest.raises(ConfigError):
        rom.deim_build(F[:, :3], 5)
    with pytest.raises(ConfigError):
        rom.deim_build(F, 2, "other")


def test_deim_rom_approaches_galerkin_rom(cubic):
    model, grid, u, Y = cubic
    space = pod.WeightedSpace(model.M, "H")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = pod.compute_pod(pod.SnapshotSet([Y], grid.alpha, space), rank=8)
    r = rom.galerkin_project(model, basis)
    Yg = rom.solve_rom(r, grid, u).Y
    diffs = []
    for p in (4, 8, 16):
        rd = r.with_deim(rom.deim_build(Y ** 3, p))
        diffs.append(np.abs(rom.solve_rom(rd, grid, u).Y - Yg).max())
    assert diffs[-1] < 1e-4 * np.abs(Yg).max()
    assert diffs[-1] <= diffs[0]
