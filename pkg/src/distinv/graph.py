"""Communication graphs, their powers, and structural masks.

Edge ``(a, b)`` means subsystem ``a`` transmits to ``b``.  Every node always
has its own information, so adjacency matrices carry a true diagonal.  The
``k``-th power links ``a`` to ``b`` whenever a walk of length at most ``k``
exists; the zeroth power is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from distinv.solver import Expr, Model


class GraphError(ValueError):
    pass


class CommGraph:
    __slots__ = ("nodes", "adjacency")

    def __init__(self, nodes, adjacency):
        nodes = tuple(str(n) for n in nodes)
        adj = np.array(adjacency, dtype=bool)
        if adj.shape != (len(nodes), len(nodes)):
            raise GraphError(f"adjacency shape {adj.shape} does not match {len(nodes)} nodes")
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node ids")
        np.fill_diagonal(adj, True)
        adj.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "adjacency", adj)

    def __setattr__(self, key, value):
        raise AttributeError("CommGraph is immutable")

    def __eq__(self, other):
        return isinstance(other, CommGraph) and self.nodes == other.nodes and np.array_equal(
            self.adjacency, other.adjacency
        )

    __hash__ = None

    def __repr__(self):
        return f"CommGraph(N={self.N}, edges={self.edges})"

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[str, str]]:
        """Off-diagonal links as ``(sender, receiver)`` pairs."""
        src, dst = np.nonzero(self.adjacency)
        return [(self.nodes[a], self.nodes[b]) for a, b in zip(src, dst) if a != b]

    def index(self, node: str) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise GraphError(f"unknown node {node!r}") from None

    # constructors -------------------------------------------------------

    @classmethod
    def from_edges(cls, nodes, edges) -> "CommGraph":
        nodes = tuple(str(n) for n in nodes)
        pos = {n: i for i, n in enumerate(nodes)}
        adj = np.eye(len(nodes), dtype=bool)
        for a, b in edges:
            if a not in pos or b not in pos:
                raise GraphError(f"edge ({a!r}, {b!r}) references an unknown node")
            adj[pos[a], pos[b]] = True
        return cls(nodes, adj)

    @classmethod
    def empty(cls, nodes) -> "CommGraph":
        nodes = tuple(nodes)
        return cls(nodes, np.eye(len(nodes), dtype=bool))

    @classmethod
    def complete(cls, nodes) -> "CommGraph":
        nodes = tuple(nodes)
        return cls(nodes, np.ones((len(nodes), len(nodes)), dtype=bool))

    @classmethod
    def directed_cycle(cls, nodes) -> "CommGraph":
        nodes = tuple(nodes)
        N = len(nodes)
        return cls.from_edges(nodes, [(nodes[i], nodes[(i + 1) % N]) for i in range(N)])

    @classmethod
    def undirected_cycle(cls, nodes) -> "CommGraph":
        nodes = tuple(nodes)
        N = len(nodes)
        edges = [(nodes[i], nodes[(i + 1) % N]) for i in range(N)]
        return cls.from_edges(nodes, edges + [(b, a) for a, b in edges])

    @classmethod
    def chain(cls, nodes) -> "CommGraph":
        """Each node transmits to the next one (predecessor following)."""
        nodes = tuple(nodes)
        return cls.from_edges(nodes, [(nodes[i], nodes[i + 1]) for i in range(len(nodes) - 1)])

    # algebra --------------------------------------------------------------

    def power(self, k: int) -> "CommGraph":
        return power(self, k)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "adjacency": self.adjacency.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CommGraph":
        if "nodes" not in data:
            raise GraphError("graph is missing field 'nodes'")
        if "edges" in data:
            return cls.from_edges(data["nodes"], [tuple(e) for e in data["edges"]])
        if "adjacency" in data:
            return cls(data["nodes"], np.asarray(data["adjacency"], dtype=bool))
        raise GraphError("graph needs 'edges' or 'adjacency'")


def reachability(adjacency, k: int) -> np.ndarray:
    """Boolean matrix of walks of length ``<= k`` (diagonal forced true)."""
    if k < 0:
        raise GraphError("graph power must be nonnegative")
    adj = np.array(adjacency, dtype=bool)
    np.fill_diagonal(adj, True)
    N = adj.shape[0]
    R = np.eye(N, dtype=bool)
    for _ in range(min(k, max(N - 1, 0))):
        nxt = (R.astype(np.int64) @ adj.astype(np.int64)) > 0
        if np.array_equal(nxt, R):
            break
        R = nxt
    return R


def power(g: CommGraph, k: int) -> CommGraph:
    return CommGraph(g.nodes, reachability(g.adjacency, k))


@dataclass(frozen=True)
class StructuralMask:
    """Allowed-entry pattern for a gain acting on states (``kind='x'``) or controls (``kind='u'``).

    ``M[i, j]`` is true when the subsystem owning signal ``j`` may send to the
    subsystem owning control ``i``.
    """

    kind: str
    M: np.ndarray

    @property
    def forbidden(self) -> np.ndarray:
        return ~self.M


def owner_mask(relation: np.ndarray, control_owner, signal_owner) -> np.ndarray:
    """Lift a node relation ``relation[src, dst]`` to a control-by-signal pattern."""
    relation = np.asarray(relation, dtype=bool)
    return relation[np.asarray(signal_owner)[None, :], np.asarray(control_owner)[:, None]]


def mask(g_k: CommGraph, sys, kind: str) -> StructuralMask:
    """Structural mask of ``g_k`` for gains of ``sys`` on states or controls."""
    if list(g_k.nodes) != list(sys.ids):
        raise GraphError(f"graph nodes {g_k.nodes} do not match subsystems {tuple(sys.ids)}")
    if kind == "x":
        M = owner_mask(g_k.adjacency, sys.control_owner, sys.state_owner)
    elif kind == "u":
        M = owner_mask(g_k.adjacency, sys.control_owner, sys.control_owner)
    else:
        raise ValueError("kind must be 'x' or 'u'")
    M.setflags(write=False)
    return StructuralMask(kind, M)


# ---------------------------------------------------------------------------
# mixed-binary encoding of Boolean powers
#
# Entries of encoded matrices are either Python bools (constants) or scalar
# Expr objects bound to variables in [0, 1].


def _and(model: Model, x, y, name):
    if x is False or y is False:
        return False
    if x is True:
        return y
    if y is True:
        return x
    z = model.add_vars((), lb=0.0, ub=1.0, name=name)
    model.add_le(z - x, 0.0)
    model.add_le(z - y, 0.0)
    model.add_ge(z - x - y, -1.0)
    return z


def _or(model: Model, terms, name):
    terms = [t for t in terms if t is not False]
    if any(t is True for t in terms):
        return True
    if not terms:
        return False
    if len(terms) == 1:
        return terms[0]
    z = model.add_vars((), lb=0.0, ub=1.0, name=name)
    total = terms[0]
    for t in terms:
        model.add_ge(z - t, 0.0)
    for t in terms[1:]:
        total = total + t
    model.add_le(z - total, 0.0)
    return z


def edge_variables(model: Model, N: int, name: str = "b", fixed=None) -> np.ndarray:
    """``N x N`` object array: true diagonal, binary variables off the diagonal.

    ``fixed`` optionally maps ``(a, b)`` pairs to constant booleans.
    """
    B = np.empty((N, N), dtype=object)
    for a in range(N):
        for b in range(N):
            if a == b:
                B[a, b] = True
            elif fixed is not None and (a, b) in fixed:
                B[a, b] = bool(fixed[(a, b)])
            else:
                B[a, b] = model.add_vars((), binary=True, name=f"{name}[{a},{b}]")
    return B


def boolean_power_constraints(model: Model, adjacency, k_max: int, name: str = "P") -> list:
    """Encode ``B(G^k)`` for ``k = 1..k_max``; returns ``[P1, ..., P_kmax]``.

    ``P_k[a, c] = OR_b (P_{k-1}[a, b] AND B[b, c])`` with continuous
    auxiliaries in ``[0, 1]``.  Powers saturate after ``N - 1`` steps, so
    higher powers reuse the saturated matrix.
    """
    if k_max < 1:
        raise GraphError("k_max must be at least 1")
    B = np.asarray(adjacency, dtype=object)
    N = B.shape[0]
    powers = [B]
    for k in range(2, k_max + 1):
        if k - 1 >= max(N - 1, 1):
            powers.append(powers[-1])
            continue
        prev = powers[-1]
        P = np.empty((N, N), dtype=object)
        for a in range(N):
            for c in range(N):
                terms = [
                    _and(model, prev[a, b], B[b, c], f"{name}{k}and[{a},{b},{c}]") for b in range(N)
                ]
                P[a, c] = _or(model, terms, f"{name}{k}[{a},{c}]")
        powers.append(P)
    return powers


def entry_value(entry, solution) -> float:
    if entry is True or entry is False:
        return float(entry)
    return float(solution.value(entry))


def encoded_matrix_value(P, solution) -> np.ndarray:
    N = P.shape[0]
    return np.array([[entry_value(P[a, b], solution) for b in range(N)] for a in range(N)])


def is_expr(entry) -> bool:
    return isinstance(entry, Expr)
