"""Command-line interface.

Exit codes: 0 optimal (or time limit with an incumbent), 2 infeasible,
3 time limit without an incumbent, 4 simulation found violations, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from distinv import config as cfgmod
from distinv.solver import SolveOptions, Status

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_NO_INCUMBENT = 3
EXIT_VIOLATION = 4

log = logging.getLogger("distinv")


def _options(args, cfg=None) -> SolveOptions:
    solver = cfg.solver if cfg is not None else dict(cfgmod.SOLVER_DEFAULTS)
    opts = SolveOptions()
    opts.time_limit = args.time_limit if args.time_limit is not None else solver.get("time_limit")
    opts.mip_gap = args.mip_gap if args.mip_gap is not None else solver.get("mip_gap")
    opts.feasibility_tol = args.tol if args.tol is not None else solver.get("tol", 1e-7)
    opts.verbose = args.verbose > 1
    return opts


def _write_json(path, data) -> None:
    if path is None:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Status):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _status_code(status: Status) -> int:
    return {
        Status.OPTIMAL: EXIT_OK,
        Status.TIME_LIMIT: EXIT_OK,
        Status.INFEASIBLE: EXIT_INFEASIBLE,
        Status.NO_INCUMBENT: EXIT_NO_INCUMBENT,
    }.get(status, EXIT_ERROR)


# ---------------------------------------------------------------------------
# commands


def cmd_synthesize(args) -> int:
    from distinv.synth import synthesize

    cfg = cfgmod.load(args.config)
    if cfg.graph is None:
        raise cfgmod.ConfigError("graph: missing section (synthesize needs a communication graph)")
    t0 = time.perf_counter()
    res = synthesize(cfg.system, cfg.X, cfg.U, cfg.W, cfg.graph, cfg.K, options=_options(args, cfg))
    elapsed = time.perf_counter() - t0
    _write_json(args.out, res.to_dict())
    if res.feasible:
        print(f"rho = {res.rho:.4f}")
    else:
        print(f"status = {res.status.value}")
    print(f"solve time = {elapsed:.2f} s")
    return _status_code(res.status)


def cmd_design_graph(args) -> int:
    from distinv.graphdesign import GraphDesignSpec, InfeasibleDesignError, design_graph

    cfg = cfgmod.load(args.config)
    solver = cfg.solver
    spec = GraphDesignSpec(
        cost=cfg.cost_matrix(),
        K=cfg.K,
        big_m_policy="fixed" if args.big_m is not None else solver["big_m_policy"],
        big_m=args.big_m if args.big_m is not None else solver["big_m"],
        time_limit=args.time_limit if args.time_limit is not None else solver["time_limit"],
        mip_gap=args.mip_gap if args.mip_gap is not None else solver["mip_gap"],
        margin_weight=args.margin_weight,
        method=args.method,
    )
    try:
        res = design_graph(cfg.system, cfg.X, cfg.U, cfg.W, spec, options=_options(args, cfg))
    except InfeasibleDesignError as exc:
        print(f"status = infeasible ({exc})")
        _write_json(args.out, {"schema": "distinv.graphdesign/1", "status": "infeasible", "message": str(exc)})
        return EXIT_INFEASIBLE
    _write_json(args.out, res.to_dict())
    print(f"status = {res.status.value}")
    if res.has_graph:
        print(f"J = {res.objective:g}")
        print("edges = " + (", ".join(f"{a}->{b}" for a, b in res.graph.edges) or "(none)"))
        if not np.isnan(res.gap):
            print(f"gap = {res.gap:.4g}")
    return _status_code(res.status)


def _load_result(path, sys_):
    from distinv.graph import CommGraph
    from distinv.synth import Theta

    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise cfgmod.ConfigError(f"result {path}: {exc}") from None
    if "theta" not in data:
        raise cfgmod.ConfigError(f"result {path}: no theta (status {data.get('status')!r})")
    theta = Theta.from_dict(data["theta"])
    if theta.shape != (sys_.m, sys_.n):
        raise cfgmod.ConfigError(f"result {path}: theta has shape {theta.shape}, config needs {(sys_.m, sys_.n)}")
    graph = CommGraph.from_dict(data["graph"]) if data.get("graph") else None
    return theta, graph


def cmd_simulate(args) -> int:
    from distinv.runtime import derive_policy
    from distinv.sim import DisturbanceStrategy, simulate

    cfg = cfgmod.load(args.config)
    theta, graph = _load_result(args.result, cfg.system)
    graph = graph or cfg.graph
    policy = derive_policy(theta, cfg.system, graph)
    seed = args.seed if args.seed is not None else cfg.seed
    strategy = DisturbanceStrategy(args.strategy, seed)
    trace, report = simulate(cfg.system, policy, strategy, args.T, cfg.X, cfg.U, cfg.W)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        trace.to_csv(out / "trace.csv")
        _write_json(out / "report.json", report.to_dict())
    print(f"violations = {len(report.violations)}")
    print(f"max utilization X = {report.max_util_x:.4f}, U = {report.max_util_u:.4f}")
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_example(args) -> int:
    from distinv.examples import example_config

    cfg = example_config(
        args.name,
        eta=args.eta,
        eps=args.eps,
        N=args.N,
        n_vehicles=args.np,
        K=args.K,
        graph=args.graph,
        design=args.design,
    )
    if args.seed is not None:
        cfg.seed = args.seed
    text = cfg.dumps()
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def _sweep_cell(job):
    from distinv import examples

    kind, case, out, time_limit, method = job
    run = examples.run_fig4 if kind == "fig4" else examples.run_fig5
    return run(case, out_dir=out, time_limit=time_limit, method=method)


def cmd_sweep(args) -> int:
    from distinv import examples

    out = Path(args.out) if args.out else None
    opts = _options(args)
    if args.table == "table1":
        rows = examples.run_table1(out_dir=out, options=opts)
    elif args.table == "table2":
        sizes = tuple(int(s) for s in args.cases.split(",")) if args.cases else (3, 4, 5, 6, 8, 10)
        rows = examples.run_table2(sizes=sizes, out_dir=out, options=opts)
    else:
        table = examples.FIG4 if args.table == "fig4" else examples.FIG5
        cases = args.cases.split(",") if args.cases else sorted(table)
        jobs = [(args.table, c, out, args.time_limit, args.method or "benders") for c in cases]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_sweep_cell, jobs))
        else:
            rows = [_sweep_cell(j) for j in jobs]
    for r in rows:
        print(f"{r['instance']}: reference={r['reference']} computed={r['computed']} status={r['status']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--time-limit", type=float, default=None, help="solver time limit in seconds")
    common.add_argument("--mip-gap", type=float, default=None, help="relative MIP gap at which to stop")
    common.add_argument("--tol", type=float, default=None, help="primal/dual feasibility tolerance")
    common.add_argument("--big-m", type=float, default=None, help="fixed big-M bound on theta entries")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="distinv", description="Distributed set-invariance control synthesis.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", parents=[common], help="max-margin policy for a given graph")
    s.add_argument("config")
    s.add_argument("-o", "--out", default=None, help="result JSON path")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("design-graph", parents=[common], help="co-design the cheapest graph")
    s.add_argument("config")
    s.add_argument("-o", "--out", default=None, help="result JSON path")
    s.add_argument("--margin-weight", type=float, default=0.0, help="reward lambda on the margin")
    s.add_argument("--method", default="milp", choices=["milp", "benders"], help="single big-M MILP or cut generation over graphs")
    s.set_defaults(func=cmd_design_graph)

    s = sub.add_parser("simulate", parents=[common], help="closed-loop simulation of a result")
    s.add_argument("result")
    s.add_argument("config")
    s.add_argument("-T", type=int, default=1000, help="number of steps")
    s.add_argument("--strategy", default="random-vertex", choices=["zero", "uniform-interior", "random-vertex", "adversarial-facet"])
    s.add_argument("-o", "--out", default=None, help="output directory for trace.csv and report.json")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("example", parents=[common], help="emit a case-study configuration")
    s.add_argument("name", choices=["double-integrators", "platoon"])
    s.add_argument("--eta", type=float, default=0.05)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--N", type=int, default=5, help="number of double integrators")
    s.add_argument("--np", type=int, default=5, help="number of platoon followers")
    s.add_argument("--K", type=int, default=None)
    s.add_argument("--graph", default=None, help="none, empty, directed-cycle, undirected-cycle, predecessor, complete")
    s.add_argument("--design", action="store_true", help="attach link costs for graph design")
    s.add_argument("-o", "--out", default=None)
    s.set_defaults(func=cmd_example)

    s = sub.add_parser("sweep", parents=[common], help="rerun a reference case-study sweep")
    s.add_argument("table", choices=["table1", "table2", "fig4", "fig5"])
    s.add_argument("--cases", default=None, help="comma-separated cases (figure letters or platoon sizes)")
    s.add_argument("--out", default=None, help="directory for CSV/JSON reports")
    s.add_argument("--method", default=None, choices=["milp", "benders"], help="graph design method for figure sweeps (default benders)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
