import numpy as np
import pytest

from distinv.examples import DoubleIntegratorSpec, build_double_integrators, cycle_graph
from distinv.graph import CommGraph
from distinv.network import Coupling, Subsystem, assemble
from distinv.poly import MembershipOracle, Polytope
from distinv.solver import Status
from distinv.synth import (
    InfeasiblePointError,
    Theta,
    centralized_policy,
    omega_maps,
    structural_residual,
    synthesize,
    synthesize_unstructured,
)


def scalar_system(a=2.0, b=1.0):
    return assemble([Subsystem("s", [[a]], [[b]])])


def scalar_problem():
    sys = scalar_system()
    return sys, Polytope.unit_box(1), Polytope.unit_box(1, 2.0), Polytope.unit_box(1, 0.1)


def random_network(rng, N=3):
    subs = [Subsystem(f"s{i}", [[rng.uniform(0.8, 1.4)]], [[1.0]]) for i in range(N)]
    coups = []
    for i in range(N):
        for j in range(N):
            if i != j and rng.random() < 0.5:
                coups.append(Coupling(f"s{i}", f"s{j}", A=[[rng.uniform(-0.2, 0.2)]]))
    sys = assemble(subs, coups)
    return sys, Polytope.unit_box(N), Polytope.unit_box(N, 2.0), Polytope.unit_box(N, 0.05)


def test_omega_maps_small_cases():
    A = np.array([[2.0]])
    B = np.array([[1.0]])
    assert len(Theta([[[-1.0]]]).omega_maps(A, B)) == 1
    E = omega_maps(A, B, [np.array([[-1.0]]), np.array([[0.0]])])
    np.testing.assert_allclose(E[1], [[1.0]])
    A2 = np.array([[1.0, 1.0], [0.0, 1.0]])
    B2 = np.array([[0.0], [1.0]])
    th0 = np.array([[0.3, -0.2]])
    E = Theta([th0, th0]).omega_maps(A2, B2)
    np.testing.assert_allclose(E[1], A2 + B2 @ th0)


def test_theta_round_trip_and_validation():
    th = Theta([np.eye(2), 2 * np.eye(2)])
    assert Theta.from_dict(th.to_dict()).K == 2
    with pytest.raises(ValueError):
        Theta([np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        Theta.from_dict({"K": 3, "thetas": [[[1.0]]]})


def test_scalar_hand_lp():
    sys, X, U, W = scalar_problem()
    res = synthesize_unstructured(sys, X, U, W, 1)
    assert res.feasible
    np.testing.assert_allclose(res.theta.thetas[0], [[-2.0]], atol=1e-9)
    assert res.rho == pytest.approx(0.9, abs=1e-9)
    assert res.diagnostics["nilpotency_residual"] < 1e-9


def test_zero_disturbance_gives_full_margin():
    sys, X, U, _ = scalar_problem()
    res = synthesize_unstructured(sys, X, U, Polytope.unit_box(1, 0.0), 2)
    assert res.rho == pytest.approx(1.0)


def test_table1_cells():
    sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(0.05, 0.05))
    d = synthesize(sys, X, U, W, cycle_graph(5, True), 6)
    u = synthesize(sys, X, U, W, cycle_graph(5, False), 6)
    assert d.rho == pytest.approx(0.27, abs=0.01)
    assert u.rho == pytest.approx(0.75, abs=0.01)
    for r in (d, u):
        assert r.diagnostics["nilpotency_residual"] <= 1e-6
        assert r.diagnostics["structural_residual"] <= 1e-6
        assert r.diagnostics["certificate_residual"] <= 1e-6
        assert structural_residual(r.theta, sys, r.graph) <= 1e-6
    # margin is maximal
    assert not synthesize(sys, X, U, W, cycle_graph(5, True), 6, fix_rho=d.rho + 0.01).feasible


def test_table1_infeasible_cell_is_typed():
    sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(0.1, 0.1))
    res = synthesize(sys, X, U, W, cycle_graph(5, True), 6)
    assert res.status == Status.INFEASIBLE
    assert res.theta is None and np.isnan(res.rho)
    assert res.to_dict()["status"] == "infeasible"


def test_margin_monotone_in_k():
    sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(0.05, 0.05))
    g = cycle_graph(5, False)
    assert synthesize(sys, X, U, W, g, 6).rho >= synthesize(sys, X, U, W, g, 4).rho - 1e-9


def test_unstructured_dominates_structured():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(20):
        sys, X, U, W = random_network(rng)
        g = CommGraph.directed_cycle(sys.ids)
        s = synthesize(sys, X, U, W, g, 3)
        c = synthesize_unstructured(sys, X, U, W, 3)
        assert c.feasible
        if s.feasible:
            assert c.rho >= s.rho - 1e-7
            checked += 1
    assert checked >= 10


def test_graph_node_mismatch():
    sys, X, U, W = scalar_problem()
    with pytest.raises(ValueError, match="do not match"):
        synthesize(sys, X, U, W, CommGraph.empty(["z"]), 1)


def test_centralized_policy_scalar():
    sys, X, U, W = scalar_problem()
    res = synthesize_unstructured(sys, X, U, W, 1)
    u, wit = centralized_policy(res.theta, sys, W, [0.0])
    assert np.abs(u).sum() == pytest.approx(0.0)
    u, wit = centralized_policy(res.theta, sys, W, [0.1])
    np.testing.assert_allclose(u, [-0.2], atol=1e-9)
    np.testing.assert_allclose(wit[0], [0.1], atol=1e-9)
    with pytest.raises(InfeasiblePointError):
        centralized_policy(res.theta, sys, W, [0.2])


def test_centralized_policy_keeps_state_invariant(rng):
    sys, X, U, W = random_network(np.random.default_rng(3), N=2)
    res = synthesize_unstructured(sys, X, U, W, 2)
    assert res.feasible
    omega = res.theta.omega(sys.A, sys.B, W)
    oracle = MembershipOracle(omega)
    E = res.theta.omega_maps(sys.A, sys.B)
    corners = [np.array([a, b]) * 0.05 for a in (-1, 1) for b in (-1, 1)]
    for _ in range(100):
        ws = [rng.uniform(-0.05, 0.05, 2) for _ in E]
        x = sum(Ek @ w for Ek, w in zip(E, ws))
        u, _ = centralized_policy(res.theta, sys, W, x)
        assert U.scale(1 - res.rho).contains(u, 1e-7)
        for w in corners:
            assert oracle.query(sys.step(x, u, w))[0]
