"""Structured max-margin synthesis of disturbance-feedback parameters.

The parameters ``theta_0 .. theta_{K-1}`` (each ``m x n``) define the
disturbance-feedback law ``u[t] = sum_k theta_k w[t-1-k]``.  With
``E_0 = I`` and ``E_j = A E_{j-1} + B theta_{j-1}``, the condition
``E_K = 0`` makes ``Omega = (+)_j E_j W`` robustly invariant and the controls
range over ``Psi = (+)_k theta_k W``.  Maximising the margin ``rho`` subject to
``Omega in (1-rho) X``, ``Psi in (1-rho) U`` and the communication structure
is a single LP.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from distinv.graph import CommGraph, mask, power
from distinv.network import NetworkSystem
from distinv.poly import (
    ContainmentCertificate,
    MinkowskiMapSet,
    Polytope,
    contains_constraints,
)
from distinv.solver import Expr, Model, SolveOptions, Status, esum

log = logging.getLogger(__name__)


class InfeasiblePointError(ValueError):
    """The queried state is not in the invariant set."""


@dataclass
class Theta:
    thetas: list

    def __post_init__(self):
        self.thetas = [np.asarray(t, dtype=float) for t in self.thetas]
        if not self.thetas:
            raise ValueError("Theta needs K >= 1 matrices")
        shapes = {t.shape for t in self.thetas}
        if len(shapes) != 1:
            raise ValueError(f"theta matrices have differing shapes {shapes}")

    @property
    def K(self) -> int:
        return len(self.thetas)

    @property
    def shape(self) -> tuple[int, int]:
        return self.thetas[0].shape

    def omega_maps(self, A, B) -> list[np.ndarray]:
        """``[E_0, ..., E_{K-1}]``."""
        return omega_maps(A, B, self.thetas)[:-1]

    def nilpotency_residual(self, A, B) -> float:
        return float(np.max(np.abs(omega_maps(A, B, self.thetas)[-1])))

    def omega(self, A, B, W: Polytope) -> MinkowskiMapSet:
        """Invariant set; maps ordered ``[E_{K-1}, ..., E_0]``."""
        return MinkowskiMapSet(tuple(reversed(self.omega_maps(A, B))), W)

    def psi(self, W: Polytope) -> MinkowskiMapSet:
        """Admissible controls; maps ordered ``[theta_0, ..., theta_{K-1}]``."""
        return MinkowskiMapSet(tuple(self.thetas), W)

    def to_dict(self) -> dict:
        return {"K": self.K, "thetas": [t.tolist() for t in self.thetas]}

    @classmethod
    def from_dict(cls, data: dict) -> "Theta":
        thetas = [np.atleast_2d(np.asarray(t, dtype=float)) for t in data["thetas"]]
        if "K" in data and int(data["K"]) != len(thetas):
            raise ValueError(f"K={data['K']} but {len(thetas)} theta matrices given")
        return cls(thetas)


def omega_maps(A, B, thetas) -> list:
    """``[E_0, ..., E_K]`` with ``E_j = A^j + sum_{i<j} A^{j-1-i} B theta_i``.

    ``thetas`` may be arrays or affine expressions; the result is affine in them.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    E = [np.eye(A.shape[0])]
    for th in thetas:
        prev = E[-1]
        E.append(A @ prev + B @ th)
    return E


def structural_composites(thetas, A, B) -> list[tuple[str, int, object]]:
    """Coefficient matrices of the state/control form with the graph power that licenses them.

    Returns ``(kind, power, matrix)`` triples: the gain on ``x[t-k+1]`` needs
    ``G^k`` and the gain on ``u[t-k]`` needs ``G^k``.
    """
    K = len(thetas)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    out = [("x", K + 1, thetas[K - 1] @ A)]
    for k in range(K - 1, 0, -1):
        out.append(("x", k + 1, thetas[k] - thetas[k - 1] @ A))
    out.append(("x", 1, thetas[0]))
    for k in range(K):
        out.append(("u", k + 1, thetas[k] @ B))
    return out


def structural_residual(theta: Theta, sys: NetworkSystem, graph: CommGraph) -> float:
    """Largest magnitude of an entry that the graph forbids."""
    worst = 0.0
    cache = {}
    for kind, p, C in structural_composites(theta.thetas, sys.A, sys.B):
        if (kind, p) not in cache:
            cache[(kind, p)] = mask(power(graph, p), sys, kind).M
        M = cache[(kind, p)]
        if (~M).any():
            worst = max(worst, float(np.max(np.abs(C[~M]))))
    return worst


@dataclass
class SynthesisResult:
    status: Status
    K: int
    theta: Theta | None = None
    rho: float = float("nan")
    omega: MinkowskiMapSet | None = None
    psi: MinkowskiMapSet | None = None
    certificates: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    graph: CommGraph | None = None

    @property
    def feasible(self) -> bool:
        return self.status == Status.OPTIMAL

    def to_dict(self) -> dict:
        out = {
            "schema": "distinv.synthesis/1",
            "status": self.status.value,
            "K": self.K,
            "rho": None if np.isnan(self.rho) else self.rho,
            "diagnostics": self.diagnostics,
        }
        if self.theta is not None:
            out["theta"] = self.theta.to_dict()
        if self.graph is not None:
            out["graph"] = self.graph.to_dict()
        out["certificate_residuals"] = {k: c.residuals for k, c in self.certificates.items()}
        return out


def _add_structure(model: Model, thetas, sys: NetworkSystem, graph: CommGraph) -> int:
    count = 0
    cache = {}
    for kind, p, C in structural_composites(thetas, sys.A, sys.B):
        if (kind, p) not in cache:
            cache[(kind, p)] = mask(power(graph, p), sys, kind).M
        M = cache[(kind, p)]
        if (~M).any():
            model.add_eq(C[~M], 0.0, name=f"struct_{kind}{p}")
            count += int((~M).sum())
    return count


def build_lp(
    sys: NetworkSystem,
    X: Polytope,
    U: Polytope,
    W: Polytope,
    K: int,
    graph: CommGraph | None = None,
    fix_rho: float | None = None,
    sparsity_weight: float = 0.0,
):
    """Assemble the max-margin LP; returns ``(model, handles)``."""
    if K < 1:
        raise ValueError("K must be a positive integer")
    n, m = sys.n, sys.m
    for name, P, d in (("X", X, n), ("U", U, m), ("W", W, n)):
        if P.dim != d:
            raise ValueError(f"{name} has dimension {P.dim}, expected {d}")
    if graph is not None and list(graph.nodes) != sys.ids:
        raise ValueError(f"graph nodes {graph.nodes} do not match subsystems {tuple(sys.ids)}")

    model = Model("synthesis")
    thetas = [model.add_vars((m, n), name=f"theta{k}") for k in range(K)]
    if fix_rho is None:
        rho = model.add_vars((), lb=0.0, ub=1.0, name="rho")
    else:
        rho = Expr.constant(float(fix_rho))
    E = omega_maps(sys.A, sys.B, thetas)
    model.add_eq(E[K], 0.0, name="nilpotency")
    n_struct = _add_structure(model, thetas, sys, graph) if graph is not None else 0
    omega = MinkowskiMapSet(tuple(reversed(E[:K])), W)
    psi = MinkowskiMapSet(tuple(thetas), W)
    cx = contains_constraints(model, omega, X, 1.0 - rho, name="X")
    cu = contains_constraints(model, psi, U, 1.0 - rho, name="U")
    objective = rho if fix_rho is None else Expr.constant(0.0)
    if sparsity_weight > 0:
        absvals = [model.add_vars((m, n), lb=0.0, name=f"abstheta{k}") for k in range(K)]
        for t, a in zip(thetas, absvals):
            model.add_ge(a - t, 0.0)
            model.add_ge(a + t, 0.0)
        objective = objective - sparsity_weight * esum(a.sum() for a in absvals)
    model.maximize(objective)
    handles = {"thetas": thetas, "rho": rho, "cx": cx, "cu": cu, "n_struct": n_struct}
    return model, handles


def _finish(sys, W, K, model, handles, sol, graph, t_build) -> SynthesisResult:
    diag = {
        "build_time": t_build,
        "solve_time": sol.runtime,
        "num_vars": model.num_vars,
        "num_rows": model.num_rows,
        "structural_zeros": handles["n_struct"],
        "solver_message": sol.message,
    }
    if not sol.ok:
        if sol.dual_ray is not None:
            diag["farkas_ray_norm"] = float(np.linalg.norm(sol.dual_ray))
        return SynthesisResult(sol.status, K, diagnostics=diag, graph=graph)
    theta = Theta([sol.value(t) for t in handles["thetas"]])
    rho = float(sol.value(handles["rho"]))
    omega = theta.omega(sys.A, sys.B, W)
    psi = theta.psi(W)
    certs = {}
    for key, block, mset in (("X", handles["cx"], omega), ("U", handles["cu"], psi)):
        cert = block.certificate(sol)
        cert.check(mset, block.target)
        certs[key] = cert
    diag["nilpotency_residual"] = theta.nilpotency_residual(sys.A, sys.B)
    diag["structural_residual"] = structural_residual(theta, sys, graph) if graph is not None else 0.0
    diag["certificate_residual"] = max(c.max_residual() for c in certs.values())
    diag["model_residual"] = sol.max_residual
    return SynthesisResult(sol.status, K, theta, rho, omega, psi, certs, diag, graph)


def synthesize(
    sys: NetworkSystem,
    X: Polytope,
    U: Polytope,
    W: Polytope,
    graph: CommGraph | None,
    K: int,
    *,
    fix_rho: float | None = None,
    sparsity_weight: float = 0.0,
    options: SolveOptions | None = None,
) -> SynthesisResult:
    """Max-margin distributed policy of memory ``K`` for the given graph.

    ``graph=None`` drops the structural constraints (centralised design).
    With ``fix_rho`` the margin is held fixed and only feasibility is checked.
    """
    t0 = time.perf_counter()
    model, handles = build_lp(sys, X, U, W, K, graph, fix_rho, sparsity_weight)
    t_build = time.perf_counter() - t0
    sol = model.solve(options)
    res = _finish(sys, W, K, model, handles, sol, graph, t_build)
    if fix_rho is not None and res.feasible:
        res.rho = float(fix_rho)
    log.info("synthesize K=%d: %s rho=%.4f (%.2fs)", K, res.status.value, res.rho, sol.runtime)
    return res


def synthesize_unstructured(sys, X, U, W, K, **kwargs) -> SynthesisResult:
    return synthesize(sys, X, U, W, None, K, **kwargs)


def centralized_policy(theta: Theta, sys: NetworkSystem, W: Polytope, x, options: SolveOptions | None = None):
    """Piecewise-affine state feedback: decompose ``x`` over the invariant set and minimise ``||u||_1``.

    Returns ``(u, witness)`` with ``witness[k]`` paired with ``E_k`` and ``theta_k``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != sys.n:
        raise ValueError(f"state has dimension {x.size}, expected {sys.n}")
    K = theta.K
    E = theta.omega_maps(sys.A, sys.B)
    model = Model("centralized-policy")
    ws = [model.add_vars(sys.n, name=f"w{k}") for k in range(K)]
    for w in ws:
        model.add_le(W.H @ w, W.h)
    model.add_eq(esum(Ek @ w for Ek, w in zip(E, ws)), x, name="decomposition")
    u = esum(th @ w for th, w in zip(theta.thetas, ws))
    t = model.add_vars(sys.m, lb=0.0, name="absu")
    model.add_ge(t - u, 0.0)
    model.add_ge(t + u, 0.0)
    model.minimize(t.sum())
    sol = model.solve(options)
    if sol.status != Status.OPTIMAL:
        raise InfeasiblePointError("state is outside the invariant set")
    return sol.value(u), [sol.value(w) for w in ws]


def certificate_from_result(result: SynthesisResult, key: str) -> ContainmentCertificate:
    return result.certificates[key]
