"""Command line front end.

Usage::

    podctl {simulate,pod,rom,control,mpc,pareto} [--config PATH] [--out DIR] [--seed N]

The configuration is a JSON object whose keys mirror :class:`RunConfig`;
unknown keys are rejected. CSV files carry floats with 17 significant digits
and identical configurations produce identical files. Exit codes: 0 success,
2 configuration error, 3 failed rigor check, 4 solver non-convergence.
"""

import argparse
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evolve, fem, optctl, pod, presets, rom
from .errors import ConfigError, ConvergenceError, PodctlError, RigorError

__all__ = ["RunConfig", "main", "run"]

FMT = "%.17g"
COMMANDS = ("simulate", "pod", "rom", "control", "mpc", "pareto")


# Configuration =============================================================
def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name: f for f in fields(cls)}
    extra = sorted(set(data) - set(known))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")
    kw = {}
    for name, value in data.items():
        sub = _SECTIONS.get(name) if cls is RunConfig else None
        kw[name] = _strict(sub, value, name) if sub is not None else value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class PodOptions:
    ell: int = None
    eps: float = None
    weight: str = "H"
    include_dq: bool = False
    strategy: str = "svd"


@dataclass
class RomOptions:
    ells: list = field(default_factory=lambda: [5, 10, 20, 40])
    control: str = "u3"


@dataclass
class ControlOptions:
    sigma: float = 0.01
    ub: list = field(default_factory=lambda: [3.0, 5.0])
    target: float = 18.0
    ell0: int = 2
    ell_max: int = 20
    ell_step: int = 1
    eps_apo: float = 1e-4
    n_random: int = 100


@dataclass
class MpcOptions:
    resolution: list = field(default_factory=lambda: [13, 13])
    T: float = 2.5
    n: int = 51
    horizon: int = 10
    ell: int = 10
    tau_rel: float = 0.03
    estimate: str = "reduced"
    modes: list = field(default_factory=lambda: ["full", "pod-no-update", "pod-update"])


@dataclass
class ParetoOptions:
    resolution: list = field(default_factory=lambda: [17, 9])
    T: float = 5.0
    n: int = 51
    h_par: float = 6.0
    h_perp: float = 1.0
    alpha_ws: float = 1e-3
    max_points: int = 20
    use_pod: bool = False
    ell0: int = 4
    ell_incr: int = 2
    ell_max: int = 30
    eps_max: float = 1e-3


@dataclass
class RunConfig:
    """All run parameters; every section is optional in the JSON file."""

    preset: str = "guiding"
    resolution: list = None
    n: int = 100
    T: float = 5.0
    pod: PodOptions = field(default_factory=PodOptions)
    rom: RomOptions = field(default_factory=RomOptions)
    control: ControlOptions = field(default_factory=ControlOptions)
    mpc: MpcOptions = field(default_factory=MpcOptions)
    pareto: ParetoOptions = field(default_factory=ParetoOptions)
    out: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        cfg = _strict(cls, data, "config")
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.preset not in ("guiding", "heat1d", "semilinear"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        if not (isinstance(self.n, int) and self.n >= 2 and self.T > 0):
            raise ConfigError("need an integer n >= 2 and T > 0")
        if self.pod.weight not in ("H", "V"):
            raise ConfigError("pod.weight must be 'H' or 'V'")
        if self.pod.strategy not in pod.STRATEGIES + ("auto",):
            raise ConfigError(f"unknown POD strategy {self.pod.strategy!r}")
        if self.rom.control not in ("u1", "u2", "u3"):
            raise ConfigError("rom.control must be u1, u2 or u3")
        if any(mode not in ("full", "pod-no-update", "pod-update") for mode in self.mpc.modes):
            raise ConfigError("unknown MPC mode")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")


_SECTIONS = {"pod": PodOptions, "rom": RomOptions, "control": ControlOptions, "mpc": MpcOptions,
             "pareto": ParetoOptions}


# Helpers ===================================================================
def _model(cfg):
    if cfg.preset == "guiding":
        return fem.guiding_model(tuple(cfg.resolution or (33, 21)))
    if cfg.preset == "heat1d":
        return fem.heat_1d_model(int(cfg.resolution[0]) if cfg.resolution else 20)
    return fem.semilinear_model(tuple(cfg.resolution or (17, 17)))


def _controls(cfg, model, grid):
    if cfg.preset == "guiding":
        return {k: fem.guiding_control(k, grid, cfg.T) for k in ("u1", "u2", "u3")}
    return {"zero": np.zeros((model.m_c, grid.n))}


def _write_csv(path, table, header):
    np.savetxt(path, np.asarray(table, dtype=float), delimiter=",", fmt=FMT,
               header=",".join(header), comments="")


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _space(cfg, model):
    W = model.M if cfg.pod.weight == "H" else model.W_V
    return pod.WeightedSpace(W, cfg.pod.weight)


# Commands ==================================================================
def cmd_simulate(cfg, out):
    model = _model(cfg)
    grid = fem.make_time_grid(cfg.T, cfg.n)
    area = float(model.lumped.sum())
    names, avgs = [], []
    for name, u in _controls(cfg, model, grid).items():
        traj = evolve.solve_state(model, grid, u)
        evolve.save_trajectory(out / f"trajectory_{name}.csv", traj)
        names.append(name)
        avgs.append(model.lumped @ traj.Y / area)
    _write_csv(out / "averages.csv", np.column_stack([grid.t] + avgs), ["t"] + names)
    return {"controls": names}


def _eig_table(basis):
    lam = basis.eigenvalues
    i = np.arange(1, lam.size + 1)
    return np.column_stack([i, lam, [basis.energy_ratio(k) for k in i]])


def cmd_pod(cfg, out):
    ratios = {}
    for kind in ("cos_cos", "cos_sum", "cos_prod"):
        Y, W, grid = fem.cos_example(kind)
        snaps = pod.SnapshotSet([Y], grid.alpha, pod.WeightedSpace(W))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            basis = pod.compute_pod(snaps, rank=min(Y.shape), strategy=cfg.pod.strategy)
        _write_csv(out / f"eig_{kind}.csv", _eig_table(basis), ["i", "lambda", "energy_ratio"])
        lam = np.zeros(5)
        lam[:min(5, basis.eigenvalues.size)] = basis.eigenvalues[:5]
        ratios[kind] = (lam[1:] / lam[0]).tolist()
    model = _model(cfg)
    grid = fem.make_time_grid(cfg.T, cfg.n)
    blocks = [evolve.solve_state(model, grid, u).Y for u in _controls(cfg, model, grid).values()]
    snaps = pod.SnapshotSet(blocks, grid.alpha, _space(cfg, model),
                            include_dq=cfg.pod.include_dq, dt=grid.dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = pod.compute_pod(snaps, rank=cfg.pod.ell or model.m, strategy=cfg.pod.strategy)
    _write_csv(out / f"eig_{cfg.preset}.csv", _eig_table(basis), ["i", "lambda", "energy_ratio"])
    return {"ratios": ratios, "rank": basis.rank}


def cmd_rom(cfg, out):
    model = _model(cfg)
    grid = fem.make_time_grid(cfg.T, cfg.n)
    if cfg.preset == "guiding":
        u = fem.guiding_control(cfg.rom.control, grid, cfg.T)
    else:
        u = np.zeros((model.m_c, grid.n))
    Y = evolve.solve_state(model, grid, u).Y
    space = _space(cfg, model)
    snaps = pod.SnapshotSet([Y], grid.alpha, space, include_dq=cfg.pod.include_dq, dt=grid.dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = pod.compute_pod(snaps, rank=max(cfg.rom.ells), strategy=cfg.pod.strategy)
    other = model.W_V if cfg.pod.weight == "H" else model.M
    rows, failures = [], []
    for ell in cfg.rom.ells:
        k = min(ell, basis.rank)
        r = rom.galerkin_project(model, basis, ell=k)
        Yr = rom.solve_rom(r, grid, u).Y
        rep = rom.aposteriori_state(model, r, grid, u, Yr, reference=Y,
                                    c_hat=1.0 if model.cubic else 0.0)
        rep.to_csv(out / f"rom_nodes_l{ell}.csv")
        eff = rep.efficiency[rep.true_error > 0]
        case = "h_vnorm" if cfg.pod.weight == "H" else "v_cross"
        tail = rom.apriori_tail_sum(basis, case, k, other)
        top = rep.true_error.max()
        rows.append([ell, k, top, rep.bound.max(), rep.bound.max() / top if top > 0 else np.nan,
                     rep.true_V, rep.bound_V, eff.min() if eff.size else np.nan,
                     eff.max() if eff.size else np.nan, tail])
        if not model.cubic and not rep.rigorous():
            failures.append(ell)
    _write_csv(out / "rom_errors.csv", rows,
               ["ell", "rank", "max_error", "max_bound", "efficiency", "error_V", "bound_V",
                "eff_min", "eff_max", "tail_sum"])
    if failures:
        raise RigorError(f"a-posteriori bound below the true error for ell = {failures}")
    return {"rank": basis.rank}


def cmd_control(cfg, out):
    if cfg.preset != "guiding":
        raise ConfigError("the control command uses the guiding preset")
    c = cfg.control
    model = _model(cfg)
    grid = fem.make_time_grid(cfg.T, cfg.n)
    spec = presets.guiding_ocp(c.sigma, c.ub, c.target)
    ref = optctl.pdass_solve(model, grid, spec)
    if not ref.converged:
        raise ConvergenceError("full-order optimization did not converge")
    u_init = presets.guiding_snapshot_control(grid, c.ub)
    basis = optctl._state_adjoint_basis(model, grid, spec, u_init, c.ell_max)
    rows, failures = [], []
    ell = min(c.ell0, basis.ell)
    top = min(c.ell_max, basis.ell)
    while True:
        r = rom.galerkin_project(model, basis, ell=ell)
        sol = optctl.pdass_solve(r, grid, spec)
        _, bound = optctl.aposteriori_control(model, grid, sol.u, spec)
        err = optctl.u_norm(grid, sol.u - ref.u)
        rows.append([ell, bound, err, sol.cost])
        if err > bound * (1 + 1e-8) + 1e-12:
            failures.append(ell)
        if bound < c.eps_apo or ell >= top:
            break
        ell = min(ell + c.ell_step, top)
    _write_csv(out / "control.csv", rows, ["ell", "bound", "true_error", "rom_cost"])
    _write_csv(out / "control_u.csv", np.column_stack([grid.t, sol.u.T, ref.u.T]),
               ["t"] + [f"u{i + 1}_pod" for i in range(model.m_c)]
               + [f"u{i + 1}_full" for i in range(model.m_c)])
    # variational inequality at the full optimum against random admissible controls
    rng = np.random.default_rng(cfg.seed)
    g = optctl.reduced_gradient(model, grid, ref.u, spec)
    _, ua, ub = spec.arrays(model.m_c, grid)
    vi = min(optctl.u_inner(grid, g, ua + rng.random(ua.shape) * (ub - ua) - ref.u)
             for _ in range(c.n_random))
    if failures:
        raise RigorError(f"control certificate below the true error for ell = {failures}")
    return {"certified": bool(rows[-1][1] < c.eps_apo), "ell": int(rows[-1][0]),
            "min_variational_inequality": vi}


def cmd_mpc(cfg, out):
    o = cfg.mpc
    model, grid, spec, mixed = presets.mpc_problem(tuple(o.resolution), o.T, o.n)
    runs = {}
    for mode in o.modes:
        runs[mode] = optctl.mpc_run(model, grid, spec, mixed, o.horizon, mode, o.ell,
                                    tau_rel=o.tau_rel, estimate=o.estimate)
    cols, head = [grid.t], ["t"]
    for mode, r in runs.items():
        cols += [r.U[0], r.Y.min(axis=0)]
        head += [f"u_{mode}", f"ymin_{mode}"]
    _write_csv(out / "mpc_closed_loop.csv", np.column_stack(cols), head)
    summary = {mode: {"updates": r.updates} for mode, r in runs.items()}
    if "full" in runs:
        ref = runs["full"].U
        for mode, r in runs.items():
            summary[mode]["relative_error"] = optctl.u_norm(grid, r.U - ref) / optctl.u_norm(grid, ref)
    _write_json(out / "mpc_summary.json", summary)
    return summary


def cmd_pareto(cfg, out):
    o = cfg.pareto
    model, grid, spec = presets.pareto_problem(tuple(o.resolution), o.T, o.n)
    pod_opts = None
    if o.use_pod:
        pod_opts = {"ell0": o.ell0, "ell_incr": o.ell_incr, "ell_max": o.ell_max,
                    "eps_max": o.eps_max}
    front = optctl.pareto_front(model, grid, spec, o.h_par, o.h_perp, o.alpha_ws, o.max_points,
                                pod=pod_opts)
    spacing = np.concatenate([[0.0], front.spacing])
    est = np.full(len(front.controls), np.nan)
    if front.certificates is not None:
        for i, c in enumerate(front.certificates, start=1):
            if c is not None and i < est.size:
                est[i] = c["estimate"]
    _write_csv(out / "pareto.csv",
               np.column_stack([np.arange(len(front.controls)), front.images, spacing, est]),
               ["i", "J1", "J2", "spacing", "estimate"])
    _write_csv(out / "pareto_references.csv", front.references, ["z1", "z2"])
    ok = optctl.nondominated(front.images) and front.spacing.max() <= o.h_par + 1e-9
    if not ok:
        raise RigorError("front points dominate each other or exceed the spacing bound")
    return {"points": len(front.controls)}


HANDLERS = {"simulate": cmd_simulate, "pod": cmd_pod, "rom": cmd_rom, "control": cmd_control,
            "mpc": cmd_mpc, "pareto": cmd_pareto}


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return RunConfig.from_dict(data)


def run(command, cfg, out):
    """Run one subcommand and write ``run.json`` next to its outputs."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = HANDLERS[command](cfg, out)
    _write_json(out / "run.json", {"command": command, "config": cfg.to_dict(), "result": result})
    return result


def main(argv=None):
    parser = argparse.ArgumentParser(prog="podctl", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        run(args.command, cfg, cfg.out)
    except PodctlError as exc:
        print(f"podctl {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
