"""Independent reference computations used by the tests.

Everything here is brute force: vertex enumeration, explicit reachability
search and exhaustive graph enumeration.  None of it shares code paths with
the LP formulations under test.
"""

from __future__ import annotations

import itertools

import numpy as np


def random_polygon(rng, q=None, lo=0.5, hi=2.0) -> tuple[np.ndarray, np.ndarray]:
    """Bounded 2-D H-representation ``(H, h)`` with the origin in its interior."""
    q = int(rng.integers(4, 9)) if q is None else q
    base = np.linspace(0.0, 2 * np.pi, q, endpoint=False)
    ang = base + rng.uniform(-0.3, 0.3, q) * (2 * np.pi / q)
    H = np.column_stack([np.cos(ang), np.sin(ang)])
    h = rng.uniform(lo, hi, q)
    return H, h


def polygon_vertices_bruteforce(H, h, tol=1e-9) -> np.ndarray:
    """All pairwise facet intersections that satisfy every inequality."""
    pts = []
    for i, j in itertools.combinations(range(len(h)), 2):
        M = H[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        z = np.linalg.solve(M, h[[i, j]])
        if np.all(H @ z <= h + tol):
            pts.append(z)
    out = []
    for z in pts:
        if not any(np.linalg.norm(z - o) < 1e-8 for o in out):
            out.append(z)
    return np.array(out)


def minkowski_vertex_candidates(maps, base_vertices) -> np.ndarray:
    """Every sum ``sum_i L_i v_i`` over vertex choices; contains all vertices of the sum."""
    images = [np.array([L @ v for v in base_vertices]) for L in maps]
    out = []
    for combo in itertools.product(*images):
        out.append(np.sum(combo, axis=0))
    return np.array(out)


def containment_scale_oracle(maps, base_vertices, Hy, hy) -> float:
    """Smallest ``alpha`` with the Minkowski sum inside ``alpha * {Hy z <= hy}``."""
    pts = minkowski_vertex_candidates(maps, base_vertices)
    ratios = (pts @ Hy.T) / hy
    return float(max(np.max(ratios), 0.0))


def reach_bfs(adj: np.ndarray, k: int) -> np.ndarray:
    """``R[a, b]`` true iff a walk of at most ``k`` edges leads from ``a`` to ``b``.

    ``adj[a, b]`` marks the edge ``a -> b``; every node reaches itself.
    """
    N = adj.shape[0]
    R = np.zeros((N, N), dtype=bool)
    for src in range(N):
        dist = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for a in frontier:
                for b in range(N):
                    if adj[a, b] and b not in dist:
                        dist[b] = dist[a] + 1
                        nxt.append(b)
            frontier = nxt
        for dst, d in dist.items():
            if d <= k:
                R[src, dst] = True
    return R


def all_digraphs(N: int):
    """Every simple digraph on ``N`` nodes as a Boolean adjacency matrix."""
    pairs = [(i, j) for i in range(N) for j in range(N) if i != j]
    for bits in itertools.product([False, True], repeat=len(pairs)):
        adj = np.zeros((N, N), dtype=bool)
        for (i, j), b in zip(pairs, bits):
            adj[i, j] = b
        yield adj


def brute_force_design(sys, X, U, W, K, cost):
    """Minimal link cost over every graph whose fixed-graph synthesis is feasible."""
    from distinv.graph import CommGraph
    from distinv.synth import synthesize

    N = sys.N
    pairs = [(a, b) for a in range(N) for b in range(N) if a != b]
    best, best_edges = np.inf, None
    for bits in itertools.product([False, True], repeat=len(pairs)):
        chosen = [p for p, on in zip(pairs, bits) if on]
        J = sum(cost[a, b] for a, b in chosen)
        if J >= best:
            continue
        g = CommGraph.from_edges(sys.ids, [(sys.ids[a], sys.ids[b]) for a, b in chosen])
        if synthesize(sys, X, U, W, g, K).feasible:
            best, best_edges = J, chosen
    return best, best_edges


def tiny_network(rng, N):
    """Scalar subsystems with random signed couplings and random box sets."""
    from distinv.network import Coupling, Subsystem, assemble
    from distinv.poly import Polytope

    subs = [Subsystem(f"s{i}", [[rng.uniform(0.9, 1.3)]], [[1.0]]) for i in range(N)]
    coups = [
        Coupling(f"s{i}", f"s{j}", A=[[rng.choice([-1, 1]) * rng.uniform(0.2, 0.6)]])
        for i in range(N)
        for j in range(N)
        if i != j and rng.random() < 0.6
    ]
    sys = assemble(subs, coups)
    X = Polytope.unit_box(N)
    U = Polytope.unit_box(N, rng.uniform(0.5, 2))
    W = Polytope.unit_box(N, rng.uniform(0.05, 0.3))
    cost = rng.integers(1, 6, (N, N)).astype(float)
    np.fill_diagonal(cost, 0.0)
    return sys, X, U, W, cost
