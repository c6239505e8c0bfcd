"""Backend-neutral LP/MILP modelling and solving."""

from distinv.solver.expr import Expr, as_expr, esum, stack
from distinv.solver.model import INF, Model, Solution, SolveOptions, SolverError, Status
from distinv.solver.mps import read_mps, write_mps

__all__ = [
    "Expr",
    "INF",
    "Model",
    "Solution",
    "SolveOptions",
    "SolverError",
    "Status",
    "as_expr",
    "esum",
    "read_mps",
    "stack",
    "write_mps",
]
