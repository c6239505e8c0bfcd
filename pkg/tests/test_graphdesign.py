import numpy as np
import pytest
from oracles import brute_force_design, tiny_network

from distinv.graphdesign import (
    GraphDesignSpec,
    InfeasibleDesignError,
    design_graph,
    lp_relaxation_bound,
    margin_tradeoff,
    network_automorphisms,
    theta_entry_bounds,
)
from distinv.network import Subsystem, assemble
from distinv.poly import Polytope
from distinv.solver import Status


@pytest.mark.parametrize("N,seed", [(2, s) for s in range(4)] + [(3, s) for s in range(4)])
def test_milp_matches_enumeration(N, seed):
    rng = np.random.default_rng(100 * N + seed)
    sys, X, U, W, cost = tiny_network(rng, N)
    best, _ = brute_force_design(sys, X, U, W, 2, cost)
    res = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2))
    assert res.status == Status.OPTIMAL
    assert res.objective == pytest.approx(best)
    assert res.diagnostics["verified"]
    assert res.diagnostics["nilpotency_residual"] <= 1e-6
    assert res.diagnostics["structural_residual"] <= 1e-6
    assert lp_relaxation_bound(sys, X, U, W, GraphDesignSpec(cost=cost, K=2)) <= res.objective + 1e-6


@pytest.mark.parametrize("N,seed", [(2, s) for s in range(4)] + [(3, s) for s in range(4)])
def test_benders_matches_enumeration(N, seed):
    rng = np.random.default_rng(100 * N + seed)
    sys, X, U, W, cost = tiny_network(rng, N)
    best, _ = brute_force_design(sys, X, U, W, 2, cost)
    res = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2, method="benders"))
    assert res.status == Status.OPTIMAL
    assert res.objective == pytest.approx(best)
    assert res.gap == 0.0
    assert res.diagnostics["verified"]
    assert res.diagnostics["structural_residual"] <= 1e-6


def test_benders_symmetric_ring():
    # identical subsystems on a directed ring with uniform costs
    N, e = 4, 0.3
    subs = [Subsystem(f"s{i}", [[1.1]], [[1.0]]) for i in range(N)]
    from distinv.network import Coupling

    sys = assemble(subs, [Coupling(f"s{i}", f"s{(i + 1) % N}", [[e]]) for i in range(N)])
    X, U, W = Polytope.unit_box(N), Polytope.unit_box(N, 2.0), Polytope.unit_box(N, 0.1)
    cost = np.ones((N, N)) - np.eye(N)
    perms = network_automorphisms(sys, X, U, W, cost)
    assert len(perms) == N  # the rotations
    assert perms[0] == tuple(range(N))
    a = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2, method="benders"))
    b = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2))
    assert a.objective == pytest.approx(b.objective)


def test_automorphisms_respect_costs():
    sys = assemble([Subsystem(f"s{i}", [[1.2]], [[1.0]]) for i in range(3)])
    X, U, W = Polytope.unit_box(3), Polytope.unit_box(3, 2.0), Polytope.unit_box(3, 0.1)
    assert len(network_automorphisms(sys, X, U, W, np.ones((3, 3)))) == 6
    cost = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=float)
    assert network_automorphisms(sys, X, U, W, cost) == [(0, 1, 2)]
    W2 = Polytope.box([0.1, 0.1, 0.2])
    assert len(network_automorphisms(sys, X, U, W2, np.ones((3, 3)))) == 2


def test_benders_rejects_margin_weight():
    with pytest.raises(ValueError, match="margin_weight"):
        GraphDesignSpec(cost=np.ones((2, 2)), K=1, method="benders", margin_weight=1.0)


def test_objective_counts_selected_links():
    rng = np.random.default_rng(301)
    sys, X, U, W, cost = tiny_network(rng, 3)
    res = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2))
    idx = {s: i for i, s in enumerate(sys.ids)}
    assert res.objective == pytest.approx(sum(cost[idx[a], idx[b]] for a, b in res.graph.edges))
    d = res.to_dict()
    assert d["schema"] == "distinv.graphdesign/1" and d["objective"] == res.objective


def test_zero_disturbance_needs_no_links():
    sys = assemble([Subsystem(f"s{i}", [[1.2]], [[1.0]]) for i in range(3)])
    X, U, W = Polytope.unit_box(3), Polytope.unit_box(3, 2.0), Polytope.unit_box(3, 0.0)
    res = margin_tradeoff(sys, X, U, W, GraphDesignSpec(cost=np.ones((3, 3)), K=1), 0.0)
    assert res.objective == 0.0 and res.graph.edges == []
    assert res.rho == pytest.approx(1.0)


def test_margin_weight_tradeoff():
    rng = np.random.default_rng(203)
    sys, X, U, W, cost = tiny_network(rng, 3)
    spec = GraphDesignSpec(cost=cost, K=2)
    base = margin_tradeoff(sys, X, U, W, spec, 0.0)
    plain = design_graph(sys, X, U, W, spec)
    assert base.objective == plain.objective
    rich = margin_tradeoff(sys, X, U, W, spec, 1e3)
    assert rich.objective >= base.objective
    assert rich.rho >= base.rho - 1e-7


def test_infeasible_design_raises():
    sys = assemble([Subsystem("s", [[2.0]], [[1.0]])])
    X, U, W = Polytope.unit_box(1), Polytope.unit_box(1, 0.1), Polytope.unit_box(1, 0.1)
    with pytest.raises(InfeasibleDesignError, match="increase K"):
        design_graph(sys, X, U, W, GraphDesignSpec(cost=np.zeros((1, 1)), K=1))


def test_fixed_big_m_policy_agrees():
    rng = np.random.default_rng(302)
    sys, X, U, W, cost = tiny_network(rng, 3)
    a = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2))
    b = design_graph(sys, X, U, W, GraphDesignSpec(cost=cost, K=2, big_m_policy="fixed", big_m=100.0))
    assert a.objective == pytest.approx(b.objective)
    assert b.diagnostics["big_m_ratio"] <= 0.95


def test_theta_entry_bounds_uses_axis_intercepts():
    # the support of this W along e_0 is 1, but only 0.5 e_0 lies in W
    W = Polytope([[1.0, 0.0], [-1.0, 0.0], [1.0, -1.0], [-1.0, 1.0], [0.0, 1.0], [0.0, -1.0]], [1, 1, 0.5, 0.5, 1, 1])
    M = theta_entry_bounds(Polytope.unit_box(1, 2.0), W, 1, 2, 1e3)
    np.testing.assert_allclose(M, [[4.0, 4.0]])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"cost": np.ones((2, 3)), "K": 1},
        {"cost": -np.ones((2, 2)), "K": 1},
        {"cost": np.ones((2, 2)), "K": 0},
        {"cost": np.ones((2, 2)), "K": 1, "big_m_policy": "magic"},
        {"cost": np.ones((2, 2)), "K": 1, "margin_weight": -1.0},
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        GraphDesignSpec(**kwargs)
