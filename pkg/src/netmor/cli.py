"""Command-line harness: ``netmor generate | simulate | train | evaluate | sweep``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import baseline as bl
from . import mor, quad, sim
from .fem import build_model, dump_matrices
from .net import load_network, save_network
from .scenarios import BENCHMARKS

log = logging.getLogger("netmor")

SWEEP_COLUMNS = ["model", "n", "n_c", "E_T", "cond_Mc", "breakdown", "wall_seconds"]
DESK_SNAPSHOTS = 100
TRAIN_FAILED = "train-failed"  # breakdown column: the reducer itself could not be trained
PAPER_SCALE = {"dx_max_m": 200.0, "dt_seconds": 1.0, "snapshots": 1000}


# --------------------------------------------------------------------------
# helpers

def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _scenario_dict(path, paper_scale: bool) -> dict:
    data = json.loads(Path(path).read_text())
    if paper_scale:
        data = dict(data, dx_max_m=PAPER_SCALE["dx_max_m"], dt_seconds=PAPER_SCALE["dt_seconds"])
    return data


def _setup(network_path, scenario_path, paper_scale=False):
    net = load_network(network_path)
    scen = sim.scenario_from_dict(_scenario_dict(scenario_path, paper_scale), net)
    fm = build_model(net, scen.dx_max or 2000.0)
    return net, scen, fm


def _fom_run(fm, scen):
    fom = sim.fom_system(fm, scen.physics)
    x0 = sim.solve_steady(fom, scen)
    return fom, x0, sim.simulate(fom, scen, x0)


def _read_trajectory(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n1 = sum(h.startswith("rho_") for h in header)
    return data[:, 0], data[:, 1:1 + n1], data[:, 1 + n1:]


def _snapshots_from_csv(path, L):
    times, A1, A2 = _read_trajectory(path)
    idx = np.unique(np.round(np.linspace(0, len(times) - 1, min(L, len(times)))).astype(int))
    return mor.SnapshotSet(A1[idx].T, A2[idx].T, times[idx])


def _build_system(kind, fm, cfg, basis=None, rule=None, deim=None):
    if kind == "fom":
        return sim.fom_system(fm, cfg)
    if basis is None:
        raise SystemExit(f"--model {kind} needs --basis")
    if kind == "rom":
        return mor.project_rom(fm, cfg, basis)
    if kind == "crom":
        if rule is None:
            raise SystemExit("--model crom needs --rule")
        return quad.project_crom(fm, cfg, basis, rule)
    if kind == "blockpod":
        return bl.project_rom_baseline(fm, cfg, basis)
    if kind == "deim":
        if deim is None:
            raise SystemExit("--model deim needs --deim")
        return bl.project_rom_baseline(fm, cfg, basis, deim)
    raise SystemExit(f"unknown model {kind!r}")


def _summary(traj, sys_):
    m = traj.monitors
    return {"model": sys_.name, "steps": len(traj.times) - 1, "completed": traj.completed,
            "breakdown": traj.breakdown, "wall_seconds": traj.wall_seconds,
            "max_mass_residual": float(np.nanmax(m["mass_residual"])),
            "min_density": float(np.nanmin(m["min_density"])),
            "min_dissipation": float(np.nanmin(m["dissipation"])),
            "max_energy_residual": float(np.max(np.abs(sim.energy_balance_residual(traj))))
            if len(traj.times) > 1 else 0.0}


# --------------------------------------------------------------------------
# generate

def cmd_generate(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    make_net, make_scen = BENCHMARKS[args.name]
    net = make_net()
    save_network(net, out / f"{args.name}.network.json")
    if args.name == "diamond":
        cases = {"": make_scen()}
    else:
        cases = {"_A": make_scen("A"), "_B": make_scen("B")}
    files = []
    for suffix, sc in cases.items():
        p = out / f"{args.name}{suffix}.scenario.json"
        _dump(sc, p)
        files.append(p.name)
    campaign = {
        "network": f"{args.name}.network.json",
        "train": files[0],
        "evaluate": files[-1:],
        "snapshots": DESK_SNAPSHOTS,
        "n1": [4, 5, 7] if args.name == "diamond" else [6, 10, 16],
        "n_c": [14, 20, 28] if args.name == "diamond" else [40, 60, 80],
        "C_tilde": quad.C_TILDE,
        "models": ["rom", "crom", "deim", "blockpod"],
    }
    _dump(campaign, out / f"{args.name}.campaign.json")
    print(f"wrote {args.name} network, {len(files)} scenario(s) and a campaign to {out}")


# --------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net, scen, fm = _setup(args.network, args.scenario, args.paper_scale)
    if args.dump_matrices:
        dump_matrices(fm, out / "matrices")
    basis = mor.load_basis(args.basis) if args.basis else None
    rule = quad.QuadratureRule.load(args.rule) if args.rule else None
    deim = bl.load_deim(args.deim) if args.deim else None
    system = _build_system(args.model, fm, scen.physics, basis, rule, deim)
    fom = system if args.model == "fom" else sim.fom_system(fm, scen.physics)
    x_fom = sim.solve_steady(fom, scen)
    x0 = x_fom if system is fom else sim.initial_state(system, scen, x_fom)
    traj = sim.simulate(system, scen, x0)
    traj.to_csv(out / "trajectory.csv", system)
    traj.monitors_to_csv(out / "monitors.csv")
    summary = _summary(traj, system)
    _dump(summary, out / "summary.json")
    status = "completed" if traj.completed else f"breakdown at t={traj.breakdown['time']:.0f} s"
    print(f"{system.name}: {summary['steps']} steps, {status}, {traj.wall_seconds:.2f} s")


# --------------------------------------------------------------------------
# train

def cmd_train(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net, scen, fm = _setup(args.network, args.scenario, args.paper_scale)
    L = args.snapshots or (PAPER_SCALE["snapshots"] if args.paper_scale else DESK_SNAPSHOTS)
    if args.trajectory:
        snaps = _snapshots_from_csv(args.trajectory, L)
    else:
        _, _, traj = _fom_run(fm, scen)
        if not traj.completed:
            raise SystemExit(f"training simulation broke down: {traj.breakdown}")
        snaps = mor.snapshots_from_trajectory(traj, L)
    digest = snaps.save(out / "snapshots.npz")
    cfg = scen.physics
    written = ["snapshots.npz"]
    if args.baseline == "blockpod":
        n = 2 * args.n + fm.Kbasis.shape[1]  # same total dimension as the compatible basis
        basis = bl.block_pod(fm, snaps, n)
        basis.save(out / "basis", digest)
        written += ["basis.json", "basis.npz"]
    else:
        basis = mor.compatible_pod(fm, snaps, args.n)
        basis.save(out / "basis", digest)
        written += ["basis.json", "basis.npz"]
        if args.baseline == "deim":
            if args.nc is None:
                raise SystemExit("--baseline deim needs --nc")
            ops = bl.train_deim(fm, cfg, snaps, basis, args.nc, naive_beta=args.naive_beta)
            bl.save_deim(ops, out / "deim.npz")
            written.append("deim.npz")
        elif args.nc is not None:
            data = quad.build_nonlinear_snapshots(fm, cfg, snaps, basis)
            rule = quad.greedy_quadrature(data, args.nc, args.ctilde, quad.McBuilder(fm, basis))
            rule.save(out / "rule.json")
            written.append("rule.json")
    n_mult = len(sim.BoundaryInputs(net, scen).mf)
    print(f"n = {basis.n + n_mult} (n1 = {basis.n1}, n2 = {basis.n2}, multipliers = {n_mult}); "
          f"wrote {', '.join(written)} to {out}")


# --------------------------------------------------------------------------
# evaluate

def cmd_evaluate(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, _, fm = _setup(args.network, args.scenario, args.paper_scale)
    t_ref, R1, R2 = _read_trajectory(args.reference)
    t_apx, X1, X2 = _read_trajectory(args.approx)
    et = sim.error_metric_ET((R1, R2), (X1, X2), fm)
    row = {"reference": str(args.reference), "approx": str(args.approx), "E_T": et,
           "steps_reference": len(t_ref) - 1, "steps_approx": len(t_apx) - 1}
    mons = Path(args.approx).with_name("monitors.csv")
    if mons.exists():
        m = np.genfromtxt(mons, delimiter=",", names=True)
        row.update(min_density=float(np.nanmin(m["min_density"])),
                   max_mass_residual=float(np.nanmax(m["mass_residual"])),
                   min_dissipation=float(np.nanmin(m["dissipation"])))
    with open(out / "evaluation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
    print(f"E_T = {et:.6e}")


# --------------------------------------------------------------------------
# sweep

_CTX: dict = {}


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


def _prepare_campaign(camp: dict, base: Path, paper_scale: bool) -> dict:
    if not camp.get("n1") or not camp.get("models"):
        raise SystemExit("campaign needs nonempty 'n1' and 'models' lists")
    if "crom" in camp["models"] or "deim" in camp["models"]:
        if not camp.get("n_c"):
            raise SystemExit("campaign needs a nonempty 'n_c' list for crom/deim")
    net_path = _resolve(base, camp["network"])
    net, scen, fm = _setup(net_path, _resolve(base, camp["train"]), paper_scale)
    cfg = scen.physics
    L = camp.get("snapshots", PAPER_SCALE["snapshots"] if paper_scale else DESK_SNAPSHOTS)
    _, x0, traj = _fom_run(fm, scen)
    snaps = mor.snapshots_from_trajectory(traj, L)
    evals = []
    for ref in camp.get("evaluate", [camp["train"]]):
        sc = sim.scenario_from_dict(_scenario_dict(_resolve(base, ref), paper_scale), net)
        _, x_e, tr_e = _fom_run(fm, sc)
        fom = sim.fom_system(fm, sc.physics)
        evals.append((Path(ref).stem.replace(".scenario", ""), sc, x_e, sim.lifted_states(tr_e, fom)))
    return {"fm": fm, "cfg": cfg, "snaps": snaps, "evals": evals,
            "C_tilde": float(camp.get("C_tilde", quad.C_TILDE)), "naive_beta": bool(camp.get("naive_beta", False))}


def _run_model(system, sc, x_fom, ref, fm):
    x0 = sim.initial_state(system, sc, x_fom)
    traj = sim.simulate(system, sc, x0)
    et = sim.error_metric_ET(ref, sim.lifted_states(traj, system), fm) if traj.completed else float("inf")
    return {"E_T": et, "breakdown": not traj.completed, "wall_seconds": traj.wall_seconds,
            "min_density": float(np.nanmin(traj.monitors["min_density"]))}


def _sweep_entry(n1):
    """All rows for one density dimension, for every evaluation scenario."""
    c = _CTX
    fm, cfg, snaps = c["fm"], c["cfg"], c["snaps"]
    rows = {name: [] for name, *_ in c["evals"]}
    basis = mor.compatible_pod(fm, snaps, n1)
    models = c["models"]
    rules, deims = {}, {}
    if "crom" in models:
        data = quad.build_nonlinear_snapshots(fm, cfg, snaps, basis)
        mcb = quad.McBuilder(fm, basis)
        for nc in c["n_c"]:
            try:
                rules[nc] = quad.greedy_quadrature(data, nc, c["C_tilde"], mcb)
            except quad.QuadratureError as exc:
                log.warning("n1=%d n_c=%d: %s", n1, nc, exc)
                rules[nc] = None
    if "deim" in models:
        for nc in c["n_c"]:
            try:
                deims[nc] = bl.train_deim(fm, cfg, snaps, basis, nc, c["naive_beta"])
            except mor.RankError as exc:
                log.warning("n1=%d n_c=%d: %s", n1, nc, exc)
                deims[nc] = None
    bp = bl.block_pod(fm, snaps, basis.n) if "blockpod" in models else None
    for name, sc, x_fom, ref in c["evals"]:
        out = rows[name]
        n = basis.n + len(sim.BoundaryInputs(fm.net, sc).mf)  # multipliers count towards n
        out.append(dict(model="proj-compatible", n=n, n_c="", E_T=mor.projection_error(fm, basis, *ref),
                        cond_Mc="", breakdown=False, wall_seconds=0.0))
        if "rom" in models:
            res = _run_model(mor.project_rom(fm, sc.physics, basis), sc, x_fom, ref, fm)
            out.append(dict(model="ROM", n=n, n_c="", cond_Mc="", **res))
        for nc, rule in rules.items():
            if rule is None:
                out.append(dict(model="CROM", n=n, n_c=nc, E_T=float("inf"), cond_Mc="",
                                breakdown=TRAIN_FAILED, wall_seconds=0.0))
                continue
            system = quad.project_crom(fm, sc.physics, basis, rule)
            res = _run_model(system, sc, x_fom, ref, fm)
            out.append(dict(model="CROM", n=n, n_c=nc, cond_Mc=rule.cond_Mc, **res))
        for nc, ops in deims.items():
            if ops is None:
                out.append(dict(model="DEIM", n=n, n_c=nc, E_T=float("inf"), cond_Mc="",
                                breakdown=TRAIN_FAILED, wall_seconds=0.0))
                continue
            system = bl.project_rom_baseline(fm, sc.physics, basis, ops)
            res = _run_model(system, sc, x_fom, ref, fm)
            out.append(dict(model="DEIM", n=n, n_c=nc, cond_Mc="", **res))
        if bp is not None:
            out.append(dict(model="proj-blockpod", n=n, n_c="", E_T=mor.projection_error(fm, bp, *ref),
                            cond_Mc="", breakdown=False, wall_seconds=0.0))
            res = _run_model(bl.project_rom_baseline(fm, sc.physics, bp), sc, x_fom, ref, fm)
            out.append(dict(model="BlockPOD", n=n, n_c="", cond_Mc="", **res))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "inf" if np.isinf(v) else f"{v:.10g}"
    return v


def run_sweep(campaign_path, out, threads: int = 1, paper_scale: bool = False) -> dict:
    """Run a campaign and write one ``sweep_<scenario>.csv`` per evaluation scenario."""
    campaign_path = Path(campaign_path)
    camp = json.loads(campaign_path.read_text())
    ctx = _prepare_campaign(camp, campaign_path.parent, paper_scale)
    ctx.update(models=list(camp["models"]), n_c=[int(v) for v in camp.get("n_c", [])])
    _CTX.clear()
    _CTX.update(ctx)
    n1s = [int(v) for v in camp["n1"]]
    if threads > 1:
        import multiprocessing as mp

        with ProcessPoolExecutor(max_workers=threads, mp_context=mp.get_context("fork")) as pool:
            results = list(pool.map(_sweep_entry, n1s))
    else:
        results = [_sweep_entry(n1) for n1 in n1s]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tables = {}
    for name, *_ in ctx["evals"]:
        rows = [r for res in results for r in res[name]]
        path = out / f"sweep_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(r[k]) for k in SWEEP_COLUMNS})
        tables[name] = rows
    return tables


def cmd_sweep(args) -> None:
    tables = run_sweep(args.campaign, args.out, args.threads, args.paper_scale)
    for name, rows in tables.items():
        broken = [f"{r['model']}(n={r['n']}, n_c={r['n_c']}): {r['breakdown']}"
                  for r in rows if r["breakdown"]]
        print(f"{name}: {len(rows)} rows, breakdowns: {', '.join(broken) or 'none'}")


# --------------------------------------------------------------------------
# entry point

def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they do not overwrite flags given before the subcommand
    def d(v):
        return argparse.SUPPRESS if suppress else v

    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--out", default=d("."), help="output directory")
    c.add_argument("--seed", type=int, default=d(0),
                   help="random seed (the pipeline itself is deterministic)")
    c.add_argument("--threads", type=int, default=d(1), help="worker processes for sweeps")
    c.add_argument("--paper-scale", action="store_true", default=d(False),
                   help="full resolution: dx 200 m, dt 1 s, 1000 snapshots")
    c.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common(True)
    p = argparse.ArgumentParser(prog="netmor", parents=[_common(False)],
                                description="Structure-preserving model reduction for gas pipe networks.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write benchmark network and scenario files")
    g.add_argument("name", choices=sorted(BENCHMARKS))
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", parents=[common], help="run a full or reduced model")
    s.add_argument("network")
    s.add_argument("scenario")
    s.add_argument("--model", default="fom", choices=["fom", "rom", "crom", "blockpod", "deim"])
    s.add_argument("--basis")
    s.add_argument("--rule")
    s.add_argument("--deim")
    s.add_argument("--dump-matrices", action="store_true", help="write the FEM operators (Matrix Market)")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", parents=[common], help="train a reduction basis and quadrature rule")
    t.add_argument("network")
    t.add_argument("scenario")
    t.add_argument("--snapshots", type=int, help="number of snapshots L")
    t.add_argument("--n", type=int, required=True, help="density dimension n1")
    t.add_argument("--nc", type=int, help="quadrature (or DEIM) size n_c")
    t.add_argument("--ctilde", type=float, default=quad.C_TILDE)
    t.add_argument("--baseline", choices=["blockpod", "deim"])
    t.add_argument("--naive-beta", action="store_true", help="DEIM on the assembled potential vector")
    t.add_argument("--trajectory", help="reuse a FOM trajectory CSV instead of simulating")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="relative error of a trajectory")
    e.add_argument("reference")
    e.add_argument("approx")
    e.add_argument("--network", required=True)
    e.add_argument("--scenario", required=True)
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", parents=[common], help="run a campaign over n and n_c")
    w.add_argument("campaign")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"netmor: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
