"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the terminal summary (see ``conftest.py``).
Graph design for the figure instances uses the exact cut-generation method;
the single big-M MILP does not close its gap on these within 30 minutes.
"""

import time

import numpy as np
import pytest
from oracles import (
    all_digraphs,
    brute_force_design,
    containment_scale_oracle,
    polygon_vertices_bruteforce,
    random_polygon,
    reach_bfs,
    tiny_network,
)
from test_graph import encoded_powers

from distinv.examples import (
    FIG4,
    FIG5,
    TABLE1,
    TABLE2,
    DoubleIntegratorSpec,
    PlatoonSpec,
    build_double_integrators,
    build_platoon,
    cycle_graph,
    fig4_instance,
    fig5_instance,
    node_names,
)
from distinv.graph import CommGraph
from distinv.graphdesign import GraphDesignSpec, InfeasibleDesignError, design_graph
from distinv.poly import MinkowskiMapSet, Polytope, certify_containment
from distinv.runtime import derive_policy
from distinv.sim import DisturbanceStrategy, simulate
from distinv.synth import structural_residual, synthesize

VERDICTS: dict[int, str] = {}
# every Theta returned while checking criteria 1-9, for criterion 10
THETAS: list[tuple[str, object, object, object]] = []

TABLE2_SIZES = (3, 4, 5, 6, 8, 10)
FIG_TIME_LIMIT = 1800.0


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    VERDICTS[n] = line
    print(line)


def keep(label, theta, sys, graph) -> None:
    THETAS.append((label, theta, sys, graph))


@pytest.fixture(scope="module")
def table1():
    """Every double-integrator margin cell: (label, ref, result, elapsed, sys, X, U, W, graph)."""
    cells = []
    for K, eta, eps, p_dir, p_und in TABLE1:
        sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(eps, eta))
        for directed, ref in ((True, p_dir), (False, p_und)):
            g = cycle_graph(5, directed)
            t0 = time.perf_counter()
            res = synthesize(sys, X, U, W, g, K)
            elapsed = time.perf_counter() - t0
            label = f"K={K} eta={eta} eps={eps} {'dir' if directed else 'undir'}"
            cells.append((label, ref, res, elapsed, sys, X, U, W, g))
            if res.feasible:
                keep(label, res.theta, sys, g)
    return cells


@pytest.fixture(scope="module")
def table2():
    rows = []
    for Np in TABLE2_SIZES:
        sys, X, U, W = build_platoon(PlatoonSpec(Np, 0.05))
        g = CommGraph.chain(node_names(Np))
        t0 = time.perf_counter()
        res = synthesize(sys, X, U, W, g, Np + 1)
        elapsed = time.perf_counter() - t0
        label = f"Np={Np}"
        rows.append((label, TABLE2[Np], res, elapsed, sys, X, U, W, g))
        if res.feasible:
            keep(label, res.theta, sys, g)
    return rows


def test_criterion_01_table1(table1):
    bad = []
    for label, ref, res, elapsed, *_ in table1:
        if ref is None:
            ok = not res.feasible and res.status.value == "infeasible"
        else:
            ok = res.feasible and abs(res.rho - ref) <= 0.01
        if not ok or elapsed >= 5.0:
            got = f"{res.rho:.4f}" if res.feasible else res.status.value
            bad.append(f"{label} ref={ref} got={got} t={elapsed:.1f}s")
    worst = max((abs(r.rho - p) for _, p, r, *_ in table1 if p is not None and r.feasible), default=0.0)
    verdict(1, not bad, f"double-integrator margins, 12 cells, max |delta rho| = {worst:.4f}" + (f"; off: {bad}" if bad else ""))
    assert not bad


def test_criterion_02_table2(table2):
    bad = []
    rhos = []
    for label, ref, res, elapsed, sys, X, U, W, g in table2:
        rho = res.rho if res.feasible else float("nan")
        rhos.append(rho)
        if not res.feasible or abs(rho - ref) > 0.005 or elapsed > 60.0:
            bad.append(f"{label} ref={ref} got={rho:.4f} t={elapsed:.1f}s")
        # K = Np + 1 must be the smallest feasible memory for the chain
        Np = sys.N
        lower = synthesize(sys, X, U, W, g, Np, fix_rho=0.0)
        if lower.feasible:
            bad.append(f"{label}: K={Np} already feasible")
    if not all(a > b for a, b in zip(rhos, rhos[1:])):
        bad.append(f"not strictly decreasing: {np.round(rhos, 4).tolist()}")
    worst = max(abs(r - TABLE2[n]) for r, n in zip(rhos, TABLE2_SIZES))
    verdict(2, not bad, f"platoon margins, {len(rhos)} sizes, max |delta rho| = {worst:.4f}, K=Np+1 minimal" + (f"; off: {bad}" if bad else ""))
    assert not bad


def _design(instance, label):
    sys, X, U, W, K, cost = instance
    spec = GraphDesignSpec(cost=cost, K=K, method="benders", time_limit=FIG_TIME_LIMIT)
    t0 = time.perf_counter()
    try:
        res = design_graph(sys, X, U, W, spec)
    except InfeasibleDesignError:
        return None, time.perf_counter() - t0
    keep(label, res.theta, sys, res.graph)
    return res, time.perf_counter() - t0


def test_criterion_03_fig4():
    parts, ok = [], True
    for case in sorted(FIG4):
        ref = FIG4[case]["J"]
        res, elapsed = _design(fig4_instance(case), f"fig4{case}")
        if res is None:
            parts.append(f"({case}) ref={ref} got=infeasible")
            ok = False
            continue
        exact = res.status.value == "optimal"
        if case in ("e", "f") or exact:
            good = exact and res.objective == ref
        else:
            good = res.objective <= ref + 2
        ok &= good
        parts.append(f"({case}) ref={ref} got={res.objective:g} {res.status.value} gap={res.gap:.3g} t={elapsed:.0f}s")
    verdict(3, ok, "double-integrator graph costs: " + "; ".join(parts))
    assert ok


def test_criterion_04_fig5():
    parts, ok = [], True
    for case in ("a", "b"):
        ref = FIG5[case]["J"]
        res, elapsed = _design(fig5_instance(case), f"fig5{case}")
        if res is None:
            parts.append(f"({case}) ref={ref} got=infeasible")
            ok = False
            continue
        good = res.status.value == "optimal" and res.objective == ref
        ok &= good
        parts.append(f"({case}) ref={ref} got={res.objective:g} t={elapsed:.0f}s")
    verdict(4, ok, "platoon graph costs: " + "; ".join(parts))
    assert ok


def test_criterion_05_containment_certificates():
    rng = np.random.default_rng(2024)
    agree = 0
    n = 200
    for _ in range(n):
        Hs, hs = random_polygon(rng)
        Hy, hy = random_polygon(rng)
        maps = [rng.standard_normal((2, 2)) for _ in range(int(rng.integers(1, 5)))]
        ref = containment_scale_oracle(maps, polygon_vertices_bruteforce(Hs, hs), Hy, hy)
        # test scales on both sides of the threshold, away from it
        alpha = ref * rng.choice([rng.uniform(0.5, 0.97), rng.uniform(1.03, 1.5)])
        cert = certify_containment(MinkowskiMapSet(tuple(maps), Polytope(Hs, hs)), Polytope(Hy, hy), alpha)
        agree += (cert is not None) == (alpha >= ref)
    verdict(5, agree == n, f"Farkas certificate vs vertex oracle agree on {agree}/{n}")
    assert agree == n


def test_criterion_06_invariance(table1, table2):
    runs = violations = 0
    worst = -np.inf
    failed = []
    for label, _, res, _, sys, X, U, W, g in table1 + table2:
        if not res.feasible:
            continue
        pol = derive_policy(res.theta, sys, g)
        for kind in ("random-vertex", "adversarial-facet"):
            for seed in range(10):
                _, rep = simulate(sys, pol, DisturbanceStrategy(kind, seed), 1000, X, U, W, distributed=False)
                runs += 1
                excess = max(rep.max_util_x, rep.max_util_u) - (1.0 - res.rho)
                worst = max(worst, excess)
                violations += len(rep.violations)
                if rep.violations or excess > 1e-6:
                    failed.append(f"{label}/{kind}/{seed}")
    ok = not failed
    verdict(
        6,
        ok,
        f"{runs} closed-loop runs of T=1000, {violations} violations, "
        f"max utilisation - (1 - rho) = {worst:.2e}" + (f"; failed: {failed[:5]}" if failed else ""),
    )
    assert ok


def test_criterion_07_policy_forms(table1, table2):
    picks = [table1[1], table1[3], table1[11], table2[0], table2[3]]
    worst = 0.0
    for label, _, res, _, sys, X, U, W, g in picks:
        assert res.feasible, label
        pol = derive_policy(res.theta, sys, g)
        _, rep = simulate(sys, pol, DisturbanceStrategy("random-vertex", 7), 1000, X, U, W, distributed=True)
        worst = max(worst, rep.policy_divergence)
    ok = worst <= 1e-9
    verdict(7, ok, f"distributed state/control form vs disturbance form on 5 instances, T=1000: max |du| = {worst:.2e}")
    assert ok


def test_criterion_08_boolean_powers():
    mismatches = 0
    count = 0
    for adj in all_digraphs(3):
        P = encoded_powers(adj, 4)
        for k in range(1, 5):
            mismatches += not np.array_equal(P[k - 1], reach_bfs(adj, k))
        count += 1
    rng = np.random.default_rng(8)
    for _ in range(100):
        adj = rng.random((6, 6)) < rng.uniform(0.1, 0.5)
        np.fill_diagonal(adj, False)
        P = encoded_powers(adj, 5)
        for k in range(1, 6):
            mismatches += not np.array_equal(P[k - 1], reach_bfs(adj, k))
        count += 1
    ok = mismatches == 0
    verdict(8, ok, f"Boolean power encoding vs BFS on {count} digraphs, {mismatches} mismatches")
    assert ok


def test_criterion_09_tiny_design():
    parts, ok = [], True
    for N in (2, 3):
        for seed in range(4):
            rng = np.random.default_rng(100 * N + seed)
            sys, X, U, W, cost = tiny_network(rng, N)
            best, _ = brute_force_design(sys, X, U, W, 2, cost)
            res = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2))
            keep(f"tiny N={N} seed={seed}", res.theta, sys, res.graph)
            good = res.status.value == "optimal" and abs(res.objective - best) < 1e-9
            ok &= good
            parts.append(f"N={N}/{seed}: {res.objective:g} vs {best:g}")
    verdict(9, ok, "MILP vs enumeration: " + ", ".join(parts))
    assert ok


def test_criterion_10_residuals(table1, table2):
    worst_nil = worst_struct = 0.0
    for label, theta, sys, graph in THETAS:
        worst_nil = max(worst_nil, theta.nilpotency_residual(sys.A, sys.B))
        if graph is not None:
            worst_struct = max(worst_struct, structural_residual(theta, sys, graph))
    ok = bool(THETAS) and worst_nil <= 1e-6 and worst_struct <= 1e-6
    verdict(
        10,
        ok,
        f"{len(THETAS)} Thetas: max nilpotency residual {worst_nil:.1e}, max structural residual {worst_struct:.1e}",
    )
    assert ok
