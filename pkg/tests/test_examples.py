import numpy as np
import pytest
from scipy.optimize import linprog

from distinv.examples import (
    DoubleIntegratorSpec,
    PlatoonSpec,
    build_double_integrators,
    build_platoon,
    example_config,
    platoon_disturbance_generator,
    platoon_disturbance_set,
)
from distinv.poly import vertices


def test_double_integrator_structure():
    sys, X, U, W = build_double_integrators(DoubleIntegratorSpec(0.05, 0.05))
    assert (sys.n, sys.m, sys.N) == (10, 5, 5)
    e = 0.05
    np.testing.assert_allclose(sys.A[:2, :2], [[1 + e, 1], [-e, 1 + e]])
    np.testing.assert_allclose(sys.A[:2, 2:4], [[e, -e], [-e, e]])
    np.testing.assert_allclose(sys.B[:2, :2], [[0, -e], [1, e]])
    assert max(abs(np.linalg.eigvals(sys.A))) > 1
    assert W.support(np.ones(10)) == pytest.approx(0.5)


def test_double_integrator_spec_validation():
    with pytest.raises(ValueError):
        DoubleIntegratorSpec(0.0, 0.1)


def test_platoon_two_vehicles():
    sys, X, U, W = build_platoon(PlatoonSpec(2, 0.05))
    # distance rows: own velocity enters with -1, predecessor velocity with +1
    np.testing.assert_array_equal(sys.A, [[1, -1, 0, 0], [0, 1, 0, 0], [0, 1, 1, -1], [0, 0, 0, 1]])
    np.testing.assert_array_equal(sys.B, [[0, 0], [1, 0], [0, 0], [0, 1]])
    assert X.contains([-0.5, 0, -0.5, 0]) and not X.contains([-0.6, 0, 0, 0])
    assert X.contains([0.5, 0, 0.5, 0]) and not X.contains([0.6, 0, 0.5, 0])
    assert U.is_box()


@pytest.mark.parametrize("Np", [2, 3, 5])
def test_platoon_w_row_count_quadratic(Np):
    W = platoon_disturbance_set(Np, 0.1)
    assert W.nrows == 4 * Np + Np * (Np - 1)


@pytest.mark.parametrize("Np", [2, 3, 4])
def test_platoon_w_matches_generator(Np, rng):
    eps = 0.1
    W = platoon_disturbance_set(Np, eps)
    G, box = platoon_disturbance_generator(Np, eps)
    lo, hi = box.box_bounds()
    # images of generator vertices lie in W
    for _ in range(200):
        delta = np.where(rng.random(lo.size) < 0.5, lo, hi)
        assert W.contains(G @ delta, 1e-12)
    # every vertex of W found by support LPs is an image of the generator box
    for _ in range(40):
        v = W.support_point(rng.standard_normal(W.dim))
        res = linprog(np.zeros(lo.size), A_eq=G, b_eq=v, bounds=list(zip(lo, hi)), method="highs")
        assert res.status == 0


def test_platoon_w_is_exact_projection_small():
    # for one vehicle pair the velocity slice of W is a hexagon
    W = platoon_disturbance_set(2, 0.1)
    from distinv.poly import Polytope

    V = Polytope(W.H[:, [1, 3]][[4, 5, 6, 7, 8, 9]], W.h[[4, 5, 6, 7, 8, 9]])
    assert len(vertices(V)) == 6


def test_example_config_graph_and_design():
    cfg = example_config("double-integrators", graph="directed-cycle", K=6)
    assert cfg.K == 6 and len(cfg.graph.edges) == 5
    cfg = example_config("platoon", n_vehicles=6, design=True, eps=0.15)
    assert cfg.graph is None
    assert cfg.costs[0, 3] == 9.0
    with pytest.raises(ValueError):
        example_config("rockets")
