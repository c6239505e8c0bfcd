"""Execution of a synthesized policy by message-passing subsystem controllers.

The disturbance-feedback policy ``u[t] = sum_k theta_k w[t-1-k]`` is rewritten
in terms of measured states and applied controls by substituting
``w[t] = x[t+1] - A x[t] - B u[t]``.  Each subsystem evaluates its own rows of
that linear law from the fragments it has received.

Message model (synchronous, one hop per round): during round ``t`` every node
broadcasts its own ``x[t]`` and ``u[t-1]`` together with everything it knew at
the end of round ``t-1``.  A node at hop distance ``d`` from ``s'`` therefore
holds ``x_{s'}[t-d+1]`` and ``u_{s'}[t-d]`` (and anything older) at round ``t``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from distinv.graph import CommGraph, owner_mask, reachability
from distinv.network import NetworkSystem
from distinv.poly import MembershipOracle, Polytope
from distinv.synth import InfeasiblePointError, Theta


class AccessViolationError(RuntimeError):
    """A controller tried to use information it cannot have received."""


class StructureError(ValueError):
    """Policy gains are nonzero where the communication graph forbids it."""


# ---------------------------------------------------------------------------
# policy in state/control form


@dataclass
class DelayPolicy:
    """Linear law ``u[t] = sum_i gains_x[i] x[t-K+i] + sum_k gains_u[k] u[t-K+k]``.

    ``gains_x`` has ``K + 1`` entries (oldest first, ``x[t]`` last) and
    ``gains_u`` has ``K`` entries (``u[t-K]`` first, ``u[t-1]`` last).  When a
    graph is attached the gains are projected onto its structural masks; the
    unprojected gains stay available as ``raw_x`` / ``raw_u``.
    """

    theta: Theta
    gains_x: list
    gains_u: list
    raw_x: list
    raw_u: list
    graph: CommGraph | None = None
    max_masked_gain: float = 0.0

    @property
    def K(self) -> int:
        return self.theta.K

    def evaluate(self, x_hist, u_hist, raw: bool = False) -> np.ndarray:
        """Apply the law to ``x_hist = [x[t-K], ..., x[t]]`` and ``u_hist = [u[t-K], ..., u[t-1]]``."""
        gx, gu = (self.raw_x, self.raw_u) if raw else (self.gains_x, self.gains_u)
        if len(x_hist) != len(gx) or len(u_hist) != len(gu):
            raise ValueError(f"expected {len(gx)} states and {len(gu)} controls of history")
        u = sum(G @ np.asarray(x) for G, x in zip(gx, x_hist))
        return u + sum(G @ np.asarray(v) for G, v in zip(gu, u_hist))

    def dense(self, raw: bool = False) -> np.ndarray:
        """``[G_x[0] ... G_x[K] | G_u[0] ... G_u[K-1]]`` as one matrix."""
        gx, gu = (self.raw_x, self.raw_u) if raw else (self.gains_x, self.gains_u)
        return np.hstack(list(gx) + list(gu))

    def disturbance_form(self, w_hist) -> np.ndarray:
        """``sum_k theta_k w[t-1-k]`` with ``w_hist = [w[t-K], ..., w[t-1]]``."""
        K = self.K
        if len(w_hist) != K:
            raise ValueError(f"expected {K} disturbances of history")
        return sum(self.theta.thetas[k] @ np.asarray(w_hist[K - 1 - k]) for k in range(K))

    def to_dict(self) -> dict:
        out = {
            "schema": "distinv.policy/1",
            "K": self.K,
            "gains_x": [G.tolist() for G in self.gains_x],
            "gains_u": [G.tolist() for G in self.gains_u],
            "theta": self.theta.to_dict(),
        }
        if self.graph is not None:
            out["graph"] = self.graph.to_dict()
        return out


def hop_distance(graph: CommGraph) -> np.ndarray:
    """``D[a, b]`` = length of the shortest walk from ``a`` to ``b`` (``inf`` if none)."""
    N = graph.N
    D = np.full((N, N), np.inf)
    np.fill_diagonal(D, 0.0)
    for k in range(1, N):
        R = reachability(graph.adjacency, k)
        D[(R) & np.isinf(D)] = k
    return D


def gain_masks(sys: NetworkSystem, graph: CommGraph, K: int):
    """Allowed patterns for ``gains_x`` and ``gains_u`` (same indexing)."""
    mx = []
    for i in range(K + 1):
        age = K - i  # gain i acts on x[t - age]
        R = reachability(graph.adjacency, age + 1)
        mx.append(owner_mask(R, sys.control_owner, sys.state_owner))
    mu = []
    for k in range(K):
        age = K - k  # gain k acts on u[t - age]
        R = reachability(graph.adjacency, age)
        mu.append(owner_mask(R, sys.control_owner, sys.control_owner))
    return mx, mu


def derive_policy(theta: Theta, sys: NetworkSystem, graph: CommGraph | None = None, tol: float = 1e-6) -> DelayPolicy:
    """State/control form of ``theta``; projects onto ``graph``'s masks when given."""
    A, B = sys.A, sys.B
    th = theta.thetas
    K = theta.K
    if th[0].shape != (sys.m, sys.n):
        raise ValueError(f"theta blocks have shape {th[0].shape}, expected {(sys.m, sys.n)}")
    raw_x = [-th[K - 1] @ A]
    for i in range(1, K):
        j = K - i
        raw_x.append(th[j] - th[j - 1] @ A)
    raw_x.append(th[0].copy())
    raw_u = [-th[K - 1 - k] @ B for k in range(K)]
    gx = [G.copy() for G in raw_x]
    gu = [G.copy() for G in raw_u]
    worst = 0.0
    if graph is not None:
        if list(graph.nodes) != sys.ids:
            raise ValueError("graph nodes do not match subsystems")
        mx, mu = gain_masks(sys, graph, K)
        for G, M in list(zip(gx, mx)) + list(zip(gu, mu)):
            if (~M).any():
                worst = max(worst, float(np.max(np.abs(G[~M]))))
                G[~M] = 0.0
        if worst > tol:
            raise StructureError(f"gain of magnitude {worst:.3g} violates the communication graph")
    return DelayPolicy(theta, gx, gu, raw_x, raw_u, graph, worst)


# ---------------------------------------------------------------------------
# subsystem controllers


@dataclass
class SubsystemController:
    """Controller of one subsystem: its gain rows and the fragments it has received.

    ``store`` maps ``(source, kind, time)`` to the fragment of ``x`` or ``u``
    owned by ``source`` at ``time``.
    """

    id: str
    index: int
    rows: np.ndarray
    gains_x: list
    gains_u: list
    distance: np.ndarray
    state_slices: list
    control_slices: list
    K: int
    store: dict = field(default_factory=dict)
    reads: int = 0

    def permitted(self, source: int, kind: str, age: int) -> bool:
        """Whether the information model grants ``(source, kind, age)``."""
        d = self.distance[source, self.index]
        if kind == "x":
            return age >= 0 and d <= age + 1
        return age >= 1 and d <= age

    def _fragment(self, source: int, kind: str, time: int, t: int) -> np.ndarray:
        if not self.permitted(source, kind, t - time):
            raise AccessViolationError(
                f"{self.id} read {kind}[{time}] of subsystem {source} at round {t} without permission"
            )
        try:
            return self.store[(source, kind, time)]
        except KeyError:
            raise AccessViolationError(
                f"{self.id} needs {kind}[{time}] of subsystem {source} at round {t} but never received it"
            ) from None

    def compute(self, t: int) -> np.ndarray:
        u = np.zeros(len(self.rows))
        K = self.K
        for i, G in enumerate(self.gains_x):
            time = t - K + i
            for src, sl in enumerate(self.state_slices):
                block = G[:, sl]
                if np.any(block != 0.0):
                    u += block @ self._fragment(src, "x", time, t)
                    self.reads += 1
        for k, G in enumerate(self.gains_u):
            time = t - K + k
            for src, sl in enumerate(self.control_slices):
                block = G[:, sl]
                if np.any(block != 0.0):
                    u += block @ self._fragment(src, "u", time, t)
                    self.reads += 1
        return u

    def prune(self, t: int) -> None:
        oldest = t - self.K - 1
        for key in [k for k in self.store if k[2] < oldest]:
            del self.store[key]


def _slices(owner, N):
    owner = np.asarray(owner)
    return [np.nonzero(owner == s)[0] for s in range(N)]


def make_controllers(policy: DelayPolicy, sys: NetworkSystem, graph: CommGraph | None = None) -> list:
    """One controller per subsystem; ``graph`` defaults to the policy's graph."""
    graph = graph or policy.graph
    if graph is None:
        raise ValueError("distributed execution needs a communication graph")
    D = hop_distance(graph)
    N = sys.N
    xs, us = _slices(sys.state_owner, N), _slices(sys.control_owner, N)
    ctrls = []
    for s in range(N):
        rows = us[s]
        ctrls.append(
            SubsystemController(
                id=sys.ids[s],
                index=s,
                rows=rows,
                gains_x=[G[rows] for G in policy.gains_x],
                gains_u=[G[rows] for G in policy.gains_u],
                distance=D,
                state_slices=xs,
                control_slices=us,
                K=policy.K,
            )
        )
    return ctrls


class DistributedRuntime:
    """Lockstep message passing among :class:`SubsystemController` objects."""

    def __init__(self, policy: DelayPolicy, sys: NetworkSystem, graph: CommGraph | None = None):
        self.sys = sys
        self.policy = policy
        self.graph = graph or policy.graph
        self.controllers = make_controllers(policy, sys, self.graph)
        N = sys.N
        adj = self.graph.adjacency
        self.in_neighbors = [[a for a in range(N) if a != b and adj[a, b]] for b in range(N)]
        self.link_messages = {(self.sys.ids[a], self.sys.ids[b]): 0 for b in range(N) for a in self.in_neighbors[b]}

    def seed(self, x_hist, u_hist, t: int) -> None:
        """Load permitted fragments of a past trajectory before round ``t``.

        ``x_hist`` holds ``x[t-K..t-1]`` and ``u_hist`` holds ``u[t-K..t-1]``;
        every controller keeps exactly what the message model would have
        delivered by the end of round ``t-1``.
        """
        K = self.policy.K
        for c in self.controllers:
            for i, x in enumerate(x_hist):
                time = t - K + i
                for src, sl in enumerate(c.state_slices):
                    if c.permitted(src, "x", (t - 1) - time):
                        c.store[(src, "x", time)] = np.asarray(x)[sl].copy()
            for k, u in enumerate(u_hist):
                time = t - K + k
                for src, sl in enumerate(c.control_slices):
                    if src == c.index or c.permitted(src, "u", t - 1 - time):
                        c.store[(src, "u", time)] = np.asarray(u)[sl].copy()

    def reseed(self, x_hist, u_hist, t: int) -> None:
        """Discard every store and load a replacement past (see :meth:`seed`)."""
        for c in self.controllers:
            c.store.clear()
        self.seed(x_hist, u_hist, t)

    def step(self, x: np.ndarray, u_prev: np.ndarray, t: int) -> np.ndarray:
        """Exchange one round of messages, then return ``u[t]``."""
        return step_distributed(self, x, u_prev, t)


def step_distributed(runtime: DistributedRuntime, x, u_prev, t: int) -> np.ndarray:
    """One synchronous round: broadcast, receive, evaluate local rows."""
    ctrls = runtime.controllers
    x = np.asarray(x, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    outbox = []
    for c in ctrls:
        msg = dict(c.store)
        msg[(c.index, "x", t)] = x[c.state_slices[c.index]].copy()
        msg[(c.index, "u", t - 1)] = u_prev[c.control_slices[c.index]].copy()
        outbox.append(msg)
    for b, c in enumerate(ctrls):
        for a in runtime.in_neighbors[b]:
            for key, val in outbox[a].items():
                c.store.setdefault(key, val)
            runtime.link_messages[(runtime.sys.ids[a], runtime.sys.ids[b])] += 1
        c.store[(c.index, "x", t)] = outbox[b][(c.index, "x", t)]
        c.store[(c.index, "u", t - 1)] = outbox[b][(c.index, "u", t - 1)]
    u = np.zeros(runtime.sys.m)
    for c in ctrls:
        u[c.rows] = c.compute(t)
        c.prune(t)
    return u


# ---------------------------------------------------------------------------
# initial conditions


def decompose_initial_state(x, theta: Theta, sys: NetworkSystem, W: Polytope, tol: float = 1e-7) -> list:
    """Disturbances ``w[0..K-1]`` in ``W`` whose response reconstructs ``x`` at time ``K``.

    Raises :class:`InfeasiblePointError` when ``x`` lies outside the invariant set.
    """
    return decompose_with(MembershipOracle(theta.omega(sys.A, sys.B, W), tol), x)


def decompose_with(oracle: MembershipOracle, x) -> list:
    """As :func:`decompose_initial_state` with a prebuilt oracle for the invariant set.

    The LP residual is moved into the most recent disturbance (its map is the
    identity), so the witness reconstructs ``x`` to rounding error.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return [np.zeros(oracle.mset.base.dim) for _ in oracle.mset.maps]
    inside, witness = oracle.query(x)
    if not inside:
        raise InfeasiblePointError("state lies outside the invariant set")
    # maps are ordered E_{K-1}, ..., E_0, i.e. oldest disturbance first
    ws = [np.asarray(w, dtype=float) for w in witness]
    ws[-1] = ws[-1] + (x - oracle.mset.point(ws))
    return ws


def initial_histories(w_seq, theta: Theta, sys: NetworkSystem):
    """Replay ``w_seq = w[0..K-1]`` from rest under the disturbance-form policy.

    Returns ``(x_hist, u_hist)`` with ``x[0..K]`` and ``u[0..K-1]``; ``x[K]`` is
    the reconstructed state.
    """
    K = theta.K
    if len(w_seq) != K:
        raise ValueError(f"expected {K} disturbances")
    x = [np.zeros(sys.n)]
    u = []
    for t in range(K):
        ut = sum(theta.thetas[k] @ w_seq[t - 1 - k] for k in range(K) if t - 1 - k >= 0)
        ut = np.zeros(sys.m) + ut
        u.append(ut)
        x.append(sys.A @ x[-1] + sys.B @ ut + w_seq[t])
    return x, u


# ---------------------------------------------------------------------------
# traces


@dataclass
class NetworkTrace:
    """Closed-loop record: ``x`` has ``T + 1`` rows, ``u`` and ``w`` have ``T``."""

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    link_messages: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.x) - 1, -1)
        self.w = np.asarray(self.w, dtype=float).reshape(len(self.x) - 1, -1)

    @property
    def T(self) -> int:
        return len(self.u)

    def prefix(self, T: int) -> "NetworkTrace":
        return NetworkTrace(self.x[: T + 1], self.u[:T], self.w[:T], dict(self.link_messages))

    def to_csv(self, path) -> None:
        n, m = self.x.shape[1], self.u.shape[1]
        header = ["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)] + [f"w{i}" for i in range(n)]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for t in range(self.T + 1):
                u = self.u[t] if t < self.T else np.full(m, np.nan)
                w = self.w[t] if t < self.T else np.full(n, np.nan)
                wr.writerow([t, *self.x[t], *u, *w])

    def to_dict(self) -> dict:
        return {
            "schema": "distinv.trace/1",
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "w": self.w.tolist(),
            "link_messages": {f"{a}->{b}": c for (a, b), c in self.link_messages.items()},
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))
