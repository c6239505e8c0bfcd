"""Case studies: coupled double integrators and a vehicle platoon.

Also holds the reproduction drivers that compare computed margins and graph
costs with reference values.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from distinv.graph import CommGraph
from distinv.network import Coupling, NetworkSystem, Subsystem, assemble
from distinv.poly import Polytope

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DoubleIntegratorSpec:
    epsilon: float
    eta: float
    N: int = 5

    def __post_init__(self):
        if self.epsilon <= 0 or self.eta <= 0:
            raise ValueError("epsilon and eta must be positive")
        if self.N < 1:
            raise ValueError("N must be positive")


@dataclass(frozen=True)
class PlatoonSpec:
    n_vehicles: int
    eps: float

    def __post_init__(self):
        if self.n_vehicles < 2:
            raise ValueError("a platoon needs at least two followers")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def node_names(N: int) -> list[str]:
    return [f"s{i + 1}" for i in range(N)]


def build_double_integrators(spec: DoubleIntegratorSpec):
    """All-pairs coupled double integrators; returns ``(sys, X, U, W)``.

    ``X`` is the unit box, ``U`` twice the unit box and ``W`` the box of
    radius ``eta``.
    """
    e = spec.epsilon
    A_s = np.array([[1 + e, 1.0], [-e, 1 + e]])
    B_s = np.array([[0.0], [1.0]])
    A_c = np.array([[e, -e], [-e, e]])
    B_c = np.array([[-e], [e]])
    names = node_names(spec.N)
    subs = [Subsystem(s, A_s, B_s) for s in names]
    coups = [Coupling(a, b, A_c, B_c) for a in names for b in names if a != b]
    sys = assemble(subs, coups)
    if max(abs(np.linalg.eigvals(sys.A))) <= 1.0:
        raise AssertionError("double-integrator network is expected to be open-loop unstable")
    n, m = sys.n, sys.m
    X = Polytope.unit_box(n)
    U = Polytope.unit_box(m, 2.0)
    W = Polytope.unit_box(n, spec.eta)
    return sys, X, U, W


def platoon_disturbance_set(n_vehicles: int, eps: float) -> Polytope:
    """Aggregate disturbance set of the platoon in stacked ``(d_s, v_s)`` order.

    Distance components are independent: ``|w^d_s| <= eps/10``.  Velocity
    components are ``delta_s + delta_l`` with ``|delta_s|, |delta_l| <= eps``
    and ``delta_l`` shared by all vehicles.  Eliminating ``delta_l`` leaves
    ``|w^v_s| <= 2 eps`` and ``w^v_s - w^v_r <= 2 eps`` for every ordered pair,
    hence the quadratic row count.
    """
    Np = n_vehicles
    n = 2 * Np
    rows, rhs = [], []

    def e(i):
        v = np.zeros(n)
        v[i] = 1.0
        return v

    for s in range(Np):
        rows += [e(2 * s), -e(2 * s)]
        rhs += [eps / 10, eps / 10]
    for s in range(Np):
        rows += [e(2 * s + 1), -e(2 * s + 1)]
        rhs += [2 * eps, 2 * eps]
    for s in range(Np):
        for r in range(Np):
            if s != r:
                rows.append(e(2 * s + 1) - e(2 * r + 1))
                rhs.append(2 * eps)
    return Polytope(np.array(rows), np.array(rhs))


def platoon_disturbance_generator(n_vehicles: int, eps: float):
    """``(G, box)`` with ``w = G @ delta``, ``delta`` in ``box`` ordered ``(dx_1, dv_1, ..., dx_N, dv_N, dv_l)``."""
    Np = n_vehicles
    G = np.zeros((2 * Np, 2 * Np + 1))
    for s in range(Np):
        G[2 * s, 2 * s] = 1.0
        G[2 * s + 1, 2 * s + 1] = 1.0
        G[2 * s + 1, -1] = 1.0
    bounds = np.tile([eps / 10, eps], Np)
    bounds = np.append(bounds, eps)
    return G, Polytope.box(bounds)


def build_platoon(spec: PlatoonSpec):
    """Predecessor-coupled platoon in the leader's frame; returns ``(sys, X, U, W)``.

    Vehicle ``s_i`` follows ``s_{i-1}`` (``s_1`` follows the leader, whose
    velocity is zero in its own frame).
    """
    Np = spec.n_vehicles
    names = node_names(Np)
    A_s = np.array([[1.0, -1.0], [0.0, 1.0]])
    B_s = np.array([[0.0], [1.0]])
    A_c = np.array([[0.0, 1.0], [0.0, 0.0]])
    subs = [Subsystem(s, A_s, B_s) for s in names]
    coups = [Coupling(names[i - 1], names[i], A_c, None) for i in range(1, Np)]
    sys = assemble(subs, coups)
    n = sys.n
    rows, rhs = [], []
    for s in range(Np):
        r = np.zeros(n)
        r[2 * s] = -1.0
        rows.append(r)
        rhs.append(0.5)
    r = np.zeros(n)
    r[0::2] = 1.0
    rows.append(r)
    rhs.append(0.5 * Np)
    X = Polytope(np.array(rows), np.array(rhs))
    U = Polytope.unit_box(sys.m)
    W = platoon_disturbance_set(Np, spec.eps)
    return sys, X, U, W


# ---------------------------------------------------------------------------
# reference values

TABLE1 = [
    # (K, eta, eps, directed, undirected); None marks an infeasible cell
    (6, 0.05, 0.05, 0.27, 0.75),
    (6, 0.1, 0.1, None, 0.33),
    (6, 0.1, 0.01, 0.02, 0.58),
    (4, 0.05, 0.01, None, 0.79),
    (4, 0.05, 0.05, None, 0.75),
    (6, 0.05, 0.01, 0.51, 0.79),
]

TABLE2 = {3: 0.727, 4: 0.726, 5: 0.723, 6: 0.721, 8: 0.716, 10: 0.710, 12: 0.704, 15: 0.697}

FIG4 = {
    "a": {"K": 3, "eta": 0.2, "eps": 0.06, "J": 14},
    "b": {"K": 6, "eta": 0.2, "eps": 0.1, "J": 9},
    "c": {"K": 4, "eta": 0.2, "eps": 0.05, "J": 8},
    "d": {"K": 4, "eta": 0.1, "eps": 0.1, "J": 7},
    "e": {"K": 4, "eta": 0.1, "eps": 0.02, "J": 5},
    "f": {"K": 6, "eta": 0.1, "eps": 0.01, "J": 0},
}

FIG5 = {
    "a": {"eps": 0.15, "K": 8, "J": 0},
    "b": {"eps": 0.18, "K": 8, "J": 5},
    "c": {"eps": 0.1836, "K": 8, "J": 26},
}


def cycle_graph(N: int, directed: bool) -> CommGraph:
    names = node_names(N)
    return CommGraph.directed_cycle(names) if directed else CommGraph.undirected_cycle(names)


def distance_costs(N: int) -> np.ndarray:
    """``c[i, j] = (i - j)^2``; penalises long links along the platoon."""
    idx = np.arange(N)
    return (idx[:, None] - idx[None, :]).astype(float) ** 2


def unit_costs(N: int) -> np.ndarray:
    return np.ones((N, N)) - np.eye(N)


# ---------------------------------------------------------------------------
# reproduction drivers


def _write_rows(rows: list[dict], out_dir: Path | None, stem: str) -> None:
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["instance", "reference", "computed", "delta", "solve_time", "status"])
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r.get(k) for k in writer.fieldnames})
    (out_dir / f"{stem}.json").write_text(json.dumps(rows, indent=2))


def _delta(ref, computed):
    if ref is None or computed is None:
        return None
    return computed - ref


def run_table1(out_dir=None, options=None) -> list[dict]:
    from distinv.synth import synthesize

    rows = []
    for K, eta, eps, p_dir, p_und in TABLE1:
        sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(eps, eta))
        for directed, ref in ((True, p_dir), (False, p_und)):
            name = f"K={K} eta={eta} eps={eps} {'directed' if directed else 'undirected'}"
            t0 = time.perf_counter()
            try:
                res = synthesize(sys, X, U, W, cycle_graph(5, directed), K, options=options)
                computed = res.rho if res.feasible else None
                status = res.status.value
            except Exception as exc:  # noqa: BLE001 - keep sweeping
                computed, status = None, f"error: {exc}"
            rows.append(
                {
                    "instance": name,
                    "reference": "infeasible" if ref is None else ref,
                    "computed": "infeasible" if computed is None and status == "infeasible" else computed,
                    "delta": _delta(ref, computed),
                    "solve_time": time.perf_counter() - t0,
                    "status": status,
                }
            )
    _write_rows(rows, out_dir, "table1")
    return rows


def run_table2(sizes=(3, 4, 5, 6, 8, 10), out_dir=None, options=None) -> list[dict]:
    from distinv.synth import synthesize

    rows = []
    for Np in sizes:
        sys, X, U, W = build_platoon(PlatoonSpec(Np, 0.05))
        g = CommGraph.chain(node_names(Np))
        t0 = time.perf_counter()
        try:
            res = synthesize(sys, X, U, W, g, Np + 1, options=options)
            computed = res.rho if res.feasible else None
            status = res.status.value
        except Exception as exc:  # noqa: BLE001
            computed, status = None, f"error: {exc}"
        ref = TABLE2.get(Np)
        rows.append(
            {
                "instance": f"Np={Np} K={Np + 1}",
                "reference": ref,
                "computed": computed,
                "delta": _delta(ref, computed),
                "solve_time": time.perf_counter() - t0,
                "status": status,
            }
        )
    _write_rows(rows, out_dir, "table2")
    return rows


def fig4_instance(case: str):
    p = FIG4[case]
    sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(p["eps"], p["eta"]))
    return sys, X, U, W, p["K"], unit_costs(sys.N)


def fig5_instance(case: str, N: int = 6):
    p = FIG5[case]
    sys, X, U, W = build_platoon(PlatoonSpec(N, p["eps"]))
    return sys, X, U, W, p["K"], distance_costs(N)


def _run_design(label: str, instance, ref_J, out_dir, time_limit, options, method):
    from distinv.graphdesign import GraphDesignSpec, InfeasibleDesignError, design_graph

    sys, X, U, W, K, cost = instance
    spec = GraphDesignSpec(cost=cost, K=K, time_limit=time_limit, method=method)
    t0 = time.perf_counter()
    try:
        res = design_graph(sys, X, U, W, spec, options=options)
        computed = res.objective if res.has_graph else None
        status = res.status.value
        extra = {"edges": [list(e) for e in res.graph.edges] if res.graph else None, "gap": res.gap}
    except InfeasibleDesignError:
        computed, status, extra = None, "infeasible", {}
    except Exception as exc:  # noqa: BLE001
        computed, status, extra = None, f"error: {exc}", {}
    row = {
        "instance": label,
        "reference": ref_J,
        "computed": computed,
        "delta": _delta(ref_J, computed),
        "solve_time": time.perf_counter() - t0,
        "status": status,
        **extra,
    }
    _write_rows([row], out_dir, label.replace(" ", "_").replace("(", "").replace(")", ""))
    return row


def run_fig4(case: str, out_dir=None, time_limit: float | None = 1800.0, options=None, method="benders") -> dict:
    return _run_design(f"fig4{case}", fig4_instance(case), FIG4[case]["J"], out_dir, time_limit, options, method)


def run_fig5(case: str, out_dir=None, time_limit: float | None = 1800.0, options=None, method="benders") -> dict:
    return _run_design(f"fig5{case}", fig5_instance(case), FIG5[case]["J"], out_dir, time_limit, options, method)


# ---------------------------------------------------------------------------
# ready-to-run configurations

GRAPH_CHOICES = ("none", "empty", "directed-cycle", "undirected-cycle", "predecessor", "complete")


def _graph(kind: str, names):
    if kind == "none":
        return None
    if kind == "empty":
        return CommGraph.empty(names)
    if kind == "directed-cycle":
        return CommGraph.directed_cycle(names)
    if kind == "undirected-cycle":
        return CommGraph.undirected_cycle(names)
    if kind == "predecessor":
        return CommGraph.chain(names)
    if kind == "complete":
        return CommGraph.complete(names)
    raise ValueError(f"unknown graph {kind!r}; choose from {GRAPH_CHOICES}")


def example_config(name: str, *, eta=0.05, eps=0.05, N=5, n_vehicles=5, K=None, graph=None, design=False):
    """Build a :class:`~distinv.config.ProblemConfig` for one of the case studies.

    ``design=True`` attaches link costs (unit for the double integrators,
    squared index distance for the platoon) and drops the graph.
    """
    from distinv.config import ProblemConfig

    if name == "double-integrators":
        sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(eps, eta, N))
        K = 6 if K is None else K
        graph = "undirected-cycle" if graph is None else graph
        costs = unit_costs(N) if design else None
        label = f"double-integrators N={N} eps={eps} eta={eta} K={K}"
    elif name == "platoon":
        sys, X, U, W = build_platoon(PlatoonSpec(n_vehicles, eps))
        K = n_vehicles + 1 if K is None else K
        graph = "predecessor" if graph is None else graph
        costs = distance_costs(n_vehicles) if design else None
        label = f"platoon Np={n_vehicles} eps={eps} K={K}"
    else:
        raise ValueError(f"unknown example {name!r}; choose 'double-integrators' or 'platoon'")
    g = None if design else _graph(graph, sys.ids)
    return ProblemConfig(system=sys, X=X, U=U, W=W, K=K, graph=g, costs=costs, name=label)
