"""Backend-neutral LP/MILP model and solution containers."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from distinv.solver.expr import Expr, _pad, as_expr

log = logging.getLogger(__name__)

INF = float("inf")


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time-limit-with-incumbent"
    NO_INCUMBENT = "time-limit-no-incumbent"
    ERROR = "error"

    @property
    def has_values(self) -> bool:
        return self in (Status.OPTIMAL, Status.TIME_LIMIT)


class SolverError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    backend: str = "highs"
    time_limit: float | None = None
    mip_gap: float | None = None
    feasibility_tol: float = 1e-7
    verbose: bool = False
    # HiGHS LP algorithm: "choose", "simplex" or "ipm"
    lp_method: str = "choose"
    # solve the continuous relaxation of a MILP
    relax_integrality: bool = False


@dataclass
class Solution:
    status: Status
    values: np.ndarray | None = None
    objective: float = float("nan")
    gap: float = float("nan")
    bound: float = float("nan")
    runtime: float = 0.0
    incumbents: list = field(default_factory=list)
    max_residual: float = float("nan")
    message: str = ""
    dual_ray: np.ndarray | None = None
    _registry: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.status.has_values != (self.values is not None):
            raise ValueError(f"status {self.status.value} inconsistent with presence of values")

    @property
    def ok(self) -> bool:
        return self.status.has_values

    def value(self, expr) -> np.ndarray:
        if self.values is None:
            raise SolverError(f"no values available (status {self.status.value})")
        return as_expr(expr).value(self.values)

    def __getitem__(self, name: str) -> np.ndarray:
        start, shape = self._registry[name]
        size = int(np.prod(shape, dtype=int))
        return self.values[start : start + size].reshape(shape)


class Model:
    """Linear model builder: variables, row constraints and a linear objective.

    Variables are created in named blocks; their order of registration fixes
    the column order, so rebuilt models solve deterministically.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self.registry: dict[str, tuple[int, tuple]] = {}
        self._rows: list[sp.csr_matrix] = []
        self._row_lo: list[np.ndarray] = []
        self._row_hi: list[np.ndarray] = []
        self.row_names: list[tuple[str, int, int]] = []
        self.num_vars = 0
        self.num_rows = 0
        self.objective = Expr.constant(0.0)
        self.sense = "min"

    # variables ----------------------------------------------------------

    def add_vars(self, shape=(), lb=-INF, ub=INF, binary: bool = False, name: str | None = None) -> Expr:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        size = int(np.prod(shape, dtype=int))
        lb = np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel().copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel().copy()
        if binary:
            lb = np.maximum(lb, 0.0)
            ub = np.minimum(ub, 1.0)
        if np.any(lb > ub):
            raise ValueError(f"inconsistent bounds for variable block {name!r}")
        if name is None:
            name = f"v{len(self.registry)}"
        if name in self.registry:
            raise ValueError(f"duplicate variable block name {name!r}")
        start = self.num_vars
        self.registry[name] = (start, shape)
        self._lb.append(lb)
        self._ub.append(ub)
        self._int.append(np.full(size, bool(binary)))
        self.num_vars += size
        return Expr.variables(start, shape)

    def var(self, name: str) -> Expr:
        start, shape = self.registry[name]
        return Expr.variables(start, shape)

    @property
    def is_mip(self) -> bool:
        return bool(self._int) and bool(np.concatenate(self._int).any())

    # constraints --------------------------------------------------------

    def add_rows(self, expr, lo, hi, name: str = "") -> None:
        """Add ``lo <= expr <= hi`` entrywise."""
        expr = as_expr(expr).ravel()
        if expr.coef.shape[1] > self.num_vars:
            raise ValueError("constraint references unregistered variables")
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (expr.size,)) - expr.const
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (expr.size,)) - expr.const
        if expr.size == 0:
            return
        self._rows.append(expr.coef)
        self._row_lo.append(np.asarray(lo, dtype=float))
        self._row_hi.append(np.asarray(hi, dtype=float))
        self.row_names.append((name, self.num_rows, expr.size))
        self.num_rows += expr.size

    def add_le(self, lhs, rhs, name: str = "") -> None:
        self.add_rows(as_expr(lhs) - rhs, -INF, 0.0, name)

    def add_ge(self, lhs, rhs, name: str = "") -> None:
        self.add_rows(as_expr(lhs) - rhs, 0.0, INF, name)

    def add_eq(self, lhs, rhs, name: str = "") -> None:
        self.add_rows(as_expr(lhs) - rhs, 0.0, 0.0, name)

    # objective ----------------------------------------------------------

    def minimize(self, expr) -> None:
        self.objective = as_expr(expr).reshape(())
        self.sense = "min"

    def maximize(self, expr) -> None:
        self.objective = as_expr(expr).reshape(())
        self.sense = "max"

    # assembled arrays ---------------------------------------------------

    def arrays(self):
        """Return ``(c, c0, A, row_lo, row_hi, lb, ub, integer)``; the objective is in ``self.sense``."""
        n = self.num_vars
        c = np.zeros(n)
        obj = self.objective
        if obj.coef.shape[1]:
            c[: obj.coef.shape[1]] = obj.coef.toarray().ravel()
        c0 = float(obj.const[0])
        if self._rows:
            A = sp.vstack([_pad(r, n) for r in self._rows], format="csr")
            lo = np.concatenate(self._row_lo)
            hi = np.concatenate(self._row_hi)
        else:
            A = sp.csr_matrix((0, n))
            lo = hi = np.zeros(0)
        lb = np.concatenate(self._lb) if self._lb else np.zeros(0)
        ub = np.concatenate(self._ub) if self._ub else np.zeros(0)
        integer = np.concatenate(self._int) if self._int else np.zeros(0, dtype=bool)
        return c, c0, A, lo, hi, lb, ub, integer

    def residual(self, x, integrality: bool = True) -> float:
        """Largest violation of any row or bound (and integrality) at ``x``."""
        _, _, A, lo, hi, lb, ub, integer = self.arrays()
        ax = A @ x
        viol = [0.0]
        if ax.size:
            viol.append(np.max(np.maximum(lo - ax, 0.0)))
            viol.append(np.max(np.maximum(ax - hi, 0.0)))
        if x.size:
            viol.append(np.max(np.maximum(lb - x, 0.0)))
            viol.append(np.max(np.maximum(x - ub, 0.0)))
            if integrality and integer.any():
                viol.append(np.max(np.abs(x[integer] - np.round(x[integer]))))
        return float(max(viol))

    def solve(self, options: SolveOptions | None = None, **kwargs) -> Solution:
        options = options or SolveOptions()
        for key, val in kwargs.items():
            setattr(options, key, val)
        if options.backend == "highs":
            from distinv.solver.highs_backend import solve_highs

            sol = solve_highs(self, options)
        elif options.backend == "reference":
            from distinv.solver.simplex import solve_reference

            sol = solve_reference(self, options)
        else:
            raise SolverError(f"unknown backend {options.backend!r}")
        sol._registry = self.registry
        if sol.values is not None:
            sol.max_residual = self.residual(sol.values, not options.relax_integrality)
            if sol.max_residual > 1e3 * options.feasibility_tol:
                log.warning("%s: solution residual %.2e exceeds tolerance", self.name, sol.max_residual)
        return sol

    def write_mps(self, path) -> None:
        from distinv.solver.mps import write_mps

        write_mps(self, path)
