"""Closed-loop experiments: disturbance strategies, verification and margin probing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from distinv.network import NetworkSystem
from distinv.poly import MembershipOracle, Polytope
from distinv.synth import InfeasiblePointError
from distinv.runtime import (
    DelayPolicy,
    DistributedRuntime,
    NetworkTrace,
    decompose_with,
    initial_histories,
)

log = logging.getLogger(__name__)

KINDS = ("zero", "uniform-interior", "random-vertex", "adversarial-facet")


@dataclass
class DisturbanceStrategy:
    kind: str = "random-vertex"
    seed: int = 0
    pool_size: int = 64

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {KINDS}")

    def sampler(self, W: Polytope, X: Polytope) -> "DisturbanceSampler":
        return DisturbanceSampler(self, W, X)


class DisturbanceSampler:
    """Stateful generator bound to one ``W`` (and ``X`` for the adversary)."""

    def __init__(self, strategy: DisturbanceStrategy, W: Polytope, X: Polytope):
        self.strategy = strategy
        self.W = W
        self.rng = np.random.default_rng(strategy.seed)
        self.box = W.box_bounds() if W.is_box() else None
        self._adv = FacetAdversary(W, X) if strategy.kind == "adversarial-facet" else None
        self._pool = None
        if self.box is None and strategy.kind in ("random-vertex", "uniform-interior"):
            self._pool = vertex_pool(W, strategy.pool_size, np.random.default_rng(strategy.seed + 7919))

    def __call__(self, z: np.ndarray) -> np.ndarray:
        kind = self.strategy.kind
        d = self.W.dim
        if kind == "zero":
            return np.zeros(d)
        if kind == "adversarial-facet":
            return self._adv(z)
        if self.box is not None:
            lo, hi = self.box
            if kind == "random-vertex":
                return np.where(self.rng.random(d) < 0.5, lo, hi)
            return lo + (hi - lo) * self.rng.random(d)
        if kind == "random-vertex":
            return self._pool[self.rng.integers(len(self._pool))].copy()
        # uniform-interior for a general polytope: random convex combination of pool vertices
        lam = self.rng.dirichlet(np.ones(len(self._pool)))
        return lam @ self._pool


def vertex_pool(W: Polytope, size: int, rng) -> np.ndarray:
    """Distinct vertices of ``W`` found by support LPs in random directions."""
    pts = []
    for _ in range(size):
        pts.append(W.support_point(rng.standard_normal(W.dim)))
    pts = np.array(pts)
    _, keep = np.unique(np.round(pts, 9), axis=0, return_index=True)
    return pts[np.sort(keep)]


class FacetAdversary:
    """Push the successor state against the facet of ``X`` it is closest to breaking.

    For each facet ``H_i z <= h_i`` the worst disturbance is a maximiser of
    ``H_i w`` over ``W``; the facet with the largest resulting utilisation
    ``(H_i z + sigma_W(H_i)) / h_i`` is selected.  The maximisers do not depend
    on ``z`` and are computed once.
    """

    def __init__(self, W: Polytope, X: Polytope):
        self.W = W
        self.X = X
        box = W.box_bounds() if W.is_box() else None
        pts, sig = [], []
        for row in X.H:
            if box is not None:
                lo, hi = box
                p = np.where(row > 0, hi, np.where(row < 0, lo, 0.5 * (lo + hi)))
            else:
                p = W.support_point(row)
            pts.append(p)
            sig.append(float(row @ p))
        self.points = np.array(pts).reshape(X.nrows, W.dim)
        self.sigma = np.array(sig)

    def __call__(self, z) -> np.ndarray:
        score = self.X.H @ np.asarray(z, dtype=float) + self.sigma
        h = self.X.h
        util = np.where(h > 0, score / np.where(h > 0, h, 1.0), np.where(score > 0, np.inf, 0.0))
        return self.points[int(np.argmax(util))].copy()


def adversarial_disturbance(sys: NetworkSystem, x, u, X: Polytope, W: Polytope) -> np.ndarray:
    """Vertex of ``W`` maximising the largest facet utilisation of ``A x + B u + w`` in ``X``."""
    z = sys.A @ np.asarray(x, dtype=float) + sys.B @ np.asarray(u, dtype=float)
    return FacetAdversary(W, X)(z)


# ---------------------------------------------------------------------------
# verification


@dataclass
class Violation:
    kind: str  # "state", "control" or "rci"
    step: int
    facet: int
    value: float


@dataclass
class VerificationReport:
    steps: int
    violations: list = field(default_factory=list)
    max_util_x: float = 0.0
    max_util_u: float = 0.0
    omega_checks: int = 0
    policy_divergence: float = 0.0
    reconstruction_error: float = 0.0
    resyncs: int = 0
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def margin_estimate(self) -> float:
        return float(np.clip(1.0 - max(self.max_util_x, self.max_util_u), 0.0, 1.0))

    def to_dict(self) -> dict:
        return {
            "schema": "distinv.report/1",
            "steps": self.steps,
            "violations": [vars(v) for v in self.violations],
            "max_util_x": self.max_util_x,
            "max_util_u": self.max_util_u,
            "omega_checks": self.omega_checks,
            "policy_divergence": self.policy_divergence,
            "reconstruction_error": self.reconstruction_error,
            "resyncs": self.resyncs,
            "margin_estimate": self.margin_estimate,
            "notes": list(self.notes),
        }


def _util(P: Polytope, z) -> tuple[float, int]:
    u = P.utilization(z)
    i = int(np.argmax(u))
    return float(u[i]), i


def simulate(
    sys: NetworkSystem,
    policy: DelayPolicy,
    strategy: DisturbanceStrategy,
    T: int,
    X: Polytope,
    U: Polytope,
    W: Polytope,
    *,
    x0=None,
    distributed: bool | None = None,
    omega_every: int = 10,
    tol: float = 1e-7,
    drift_tol: float = 1e-6,
    resync_tol: float | None = 1e-10,
) -> tuple[NetworkTrace, VerificationReport]:
    """Run the closed loop for ``T`` steps from ``x0`` (default the origin).

    A nonzero ``x0`` is first decomposed into hypothetical past disturbances,
    whose replay seeds every history buffer.  The distributed runtime is used
    when the policy carries a graph (override with ``distributed``).  Besides
    ``X``/``U`` membership at every step, the report tracks membership in the
    invariant set every ``omega_every`` steps, the divergence between the two
    policy forms, and the reconstruction ``x[t] = sum_j E_j w[t-1-j]``.

    The policy cancels the open-loop modes of ``A`` exactly, so rounding
    error and the solver's nilpotency residual excite a hidden mode that grows
    like ``A^t``.  When the reconstruction error exceeds ``resync_tol`` the
    current state is decomposed again and all histories are reseeded (a
    centralised correction, counted in ``report.resyncs``).  ``None`` disables
    this and exposes the raw drift.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    K = policy.K
    theta = policy.theta
    n, m = sys.n, sys.m
    oracle = MembershipOracle(theta.omega(sys.A, sys.B, W), tol)
    if x0 is None or not np.any(x0):
        w_init = [np.zeros(n) for _ in range(K)]
    else:
        w_init = decompose_with(oracle, x0)
    x_hist, u_hist = initial_histories(w_init, theta, sys)
    w_hist = list(w_init)

    if distributed is None:
        distributed = policy.graph is not None
    runtime = DistributedRuntime(policy, sys) if distributed else None
    if runtime is not None:
        runtime.seed(x_hist[:K], u_hist, K)

    E = theta.omega_maps(sys.A, sys.B)
    sampler = strategy.sampler(W, X)
    report = VerificationReport(steps=T)

    xs = [x_hist[K]]
    us, ws = [], []
    for step in range(T):
        t = K + step
        x = x_hist[-1]
        ux, ix = _util(X, x)
        report.max_util_x = max(report.max_util_x, ux)
        if ux > 1.0 + tol:
            report.violations.append(Violation("state", step, ix, ux))
        if omega_every and step % omega_every == 0:
            report.omega_checks += 1
            inside, _ = oracle.query(x)
            if not inside:
                report.violations.append(Violation("rci", step, -1, float("nan")))
        recon = sum(E[j] @ w_hist[-1 - j] for j in range(K))
        err = float(np.max(np.abs(recon - x)))
        report.reconstruction_error = max(report.reconstruction_error, err)
        if resync_tol is not None and err > resync_tol:
            try:
                w_hist = decompose_with(oracle, x)
            except InfeasiblePointError:
                report.violations.append(Violation("rci", step, -1, float("nan")))
            else:
                xr, ur = initial_histories(w_hist, theta, sys)
                x_hist = xr[:K] + [x]
                u_hist = ur
                if runtime is not None:
                    runtime.reseed(x_hist[:K], u_hist, t)
                report.resyncs += 1

        if runtime is not None:
            u = runtime.step(x, u_hist[-1], t)
        else:
            u = policy.evaluate(x_hist[-K - 1 :], u_hist[-K:])
        u_dist = policy.disturbance_form(w_hist[-K:])
        report.policy_divergence = max(report.policy_divergence, float(np.max(np.abs(u - u_dist), initial=0.0)))
        uu, iu = _util(U, u)
        report.max_util_u = max(report.max_util_u, uu)
        if uu > 1.0 + tol:
            report.violations.append(Violation("control", step, iu, uu))

        w = sampler(sys.A @ x + sys.B @ u)
        x_next = sys.A @ x + sys.B @ u + w
        x_hist.append(x_next)
        u_hist.append(u)
        w_hist.append(w)
        # only K + 1 states, K controls and K disturbances are ever read
        del x_hist[: -K - 1], u_hist[:-K], w_hist[:-K]
        xs.append(x_next)
        us.append(u)
        ws.append(w)

    x = xs[-1]
    ux, ix = _util(X, x)
    report.max_util_x = max(report.max_util_x, ux)
    if ux > 1.0 + tol:
        report.violations.append(Violation("state", T, ix, ux))
    if report.policy_divergence > drift_tol:
        report.notes.append(f"policy forms diverged by {report.policy_divergence:.2e}")
        log.warning("policy forms diverged by %.2e", report.policy_divergence)
    links = dict(runtime.link_messages) if runtime is not None else {}
    return NetworkTrace(np.array(xs), np.array(us).reshape(T, m), np.array(ws).reshape(T, n), links), report


def empirical_margin(trace: NetworkTrace, X: Polytope, U: Polytope, grid=None) -> float:
    """Largest ``rho`` on ``grid`` such that the trace stays in ``(1-rho) X`` and ``(1-rho) U``."""
    if grid is None:
        grid = np.linspace(0.0, 1.0, 101)
    grid = np.sort(np.asarray(grid, dtype=float))
    ux = max((float(np.max(X.utilization(x))) for x in trace.x), default=0.0)
    uu = max((float(np.max(U.utilization(u))) for u in trace.u), default=0.0)
    worst = max(ux, uu, 0.0)
    ok = grid[grid <= 1.0 - worst + 1e-12]
    return float(ok.max()) if ok.size else 0.0


def omega_projection(theta, sys: NetworkSystem, W: Polytope, subsystem: str, coords=(0, 1)) -> np.ndarray:
    """Vertices of the invariant set projected on two state coordinates of one subsystem."""
    from distinv.poly import project_2d

    sl = sys.state_slice(sys.index(subsystem) if isinstance(subsystem, str) else subsystem)
    idx = np.arange(sys.n)[sl]
    return project_2d(theta.omega(sys.A, sys.B, W), [int(idx[c]) for c in coords])
