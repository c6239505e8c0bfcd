import numpy as np
import pytest
from oracles import all_digraphs, reach_bfs

from distinv.graph import (
    CommGraph,
    GraphError,
    boolean_power_constraints,
    edge_variables,
    encoded_matrix_value,
    is_expr,
    mask,
    reachability,
)
from distinv.network import Coupling, Subsystem, assemble
from distinv.solver import Model, Status


def encoded_powers(adj: np.ndarray, k_max: int) -> list[np.ndarray]:
    """Solve the mixed-binary encoding with the edge variables pinned to ``adj``."""
    N = adj.shape[0]
    model = Model("powers")
    B = edge_variables(model, N)
    for a in range(N):
        for b in range(N):
            if is_expr(B[a, b]):
                model.add_eq(B[a, b], float(adj[a, b]))
    P = boolean_power_constraints(model, B, k_max)
    model.minimize(0.0 * B[0, 1])
    sol = model.solve()
    assert sol.status == Status.OPTIMAL
    return [encoded_matrix_value(Pk, sol) for Pk in P]


def test_graph_constructors():
    names = ["a", "b", "c"]
    g = CommGraph.directed_cycle(names)
    assert g.edges == [("a", "b"), ("b", "c"), ("c", "a")]
    assert len(CommGraph.undirected_cycle(names).edges) == 6
    assert CommGraph.empty(names).edges == []
    assert CommGraph.chain(names).edges == [("a", "b"), ("b", "c")]
    assert np.all(np.diag(g.adjacency))
    assert CommGraph.from_dict(g.to_dict()) == g


def test_graph_errors():
    with pytest.raises(GraphError):
        CommGraph.from_edges(["a", "b"], [("a", "z")])
    with pytest.raises(GraphError):
        CommGraph(["a", "a"], np.eye(2))
    with pytest.raises(GraphError):
        reachability(np.eye(2), -1)


def test_power_of_directed_cycle():
    g = CommGraph.directed_cycle([f"s{i}" for i in range(5)])
    assert g.power(1) == g
    assert len(g.power(2).edges) == 10
    assert g.power(4) == CommGraph.complete(g.nodes)
    assert g.power(0) == CommGraph.empty(g.nodes)


def test_reachability_exhaustive_n3():
    for adj in all_digraphs(3):
        for k in range(1, 5):
            assert np.array_equal(reachability(adj, k), reach_bfs(adj, k))


def test_reachability_random_n6(rng):
    for _ in range(100):
        adj = rng.random((6, 6)) < 0.25
        np.fill_diagonal(adj, False)
        for k in range(1, 6):
            assert np.array_equal(reachability(adj, k), reach_bfs(adj, k))


def test_encoding_exhaustive_n3():
    for adj in all_digraphs(3):
        P = encoded_powers(adj, 4)
        for k in range(1, 5):
            np.testing.assert_array_equal(P[k - 1], reach_bfs(adj, k).astype(float))


def test_encoding_random_n6(rng):
    for _ in range(10):
        adj = rng.random((6, 6)) < 0.2
        np.fill_diagonal(adj, False)
        P = encoded_powers(adj, 3)
        for k in range(1, 4):
            np.testing.assert_array_equal(P[k - 1], reach_bfs(adj, k).astype(float))


def test_mask_lifts_to_components():
    s1 = Subsystem("a", np.eye(2), [[0.0], [1.0]])
    s2 = Subsystem("b", np.eye(1), [[1.0]])
    sys = assemble([s1, s2], [Coupling("a", "b", A=[[1.0, 0.0]])])
    g = CommGraph.from_edges(["a", "b"], [("a", "b")])
    Mx = mask(g, sys, "x").M
    # control of b may use the state of a; control of a may not use b
    np.testing.assert_array_equal(Mx, [[True, True, False], [True, True, True]])
    Mu = mask(g, sys, "u").M
    np.testing.assert_array_equal(Mu, [[True, False], [True, True]])
    with pytest.raises(ValueError):
        mask(g, sys, "z")
