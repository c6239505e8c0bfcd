"""HiGHS adapter (via ``highspy``)."""

from __future__ import annotations

import logging
import time

import numpy as np

from distinv.solver.model import Solution, SolverError, Status

try:
    import highspy
except ImportError:  # pragma: no cover - exercised only without highspy
    highspy = None

log = logging.getLogger(__name__)


def _require():
    if highspy is None:
        raise SolverError("highspy is not installed; install it or use backend='reference'")


def to_highs_lp(model, relax: bool = False):
    """Translate a :class:`Model` into a ``highspy.HighsLp``."""
    _require()
    c, c0, A, lo, hi, lb, ub, integer = model.arrays()
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = c
    lp.offset_ = c0
    lp.col_lower_ = lb
    lp.col_upper_ = ub
    lp.row_lower_ = lo
    lp.row_upper_ = hi
    lp.sense_ = highspy.ObjSense.kMaximize if model.sense == "max" else highspy.ObjSense.kMinimize
    A = A.tocsr()
    A.sum_duplicates()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.num_col_ = model.num_vars
    lp.a_matrix_.num_row_ = A.shape[0]
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    if integer.any() and not relax:
        lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous for f in integer]
    return lp


def make_highs(model, options):
    _require()
    h = highspy.Highs()
    if not options.verbose:
        h.silent()
    h.setOptionValue("primal_feasibility_tolerance", options.feasibility_tol)
    h.setOptionValue("dual_feasibility_tolerance", options.feasibility_tol)
    if options.time_limit is not None:
        h.setOptionValue("time_limit", float(options.time_limit))
    if options.mip_gap is not None:
        h.setOptionValue("mip_rel_gap", float(options.mip_gap))
    if options.lp_method != "choose":
        h.setOptionValue("solver", options.lp_method)
    status = h.passModel(to_highs_lp(model, options.relax_integrality))
    if status == highspy.HighsStatus.kError:
        raise SolverError(f"HiGHS rejected model {model.name!r}")
    return h


def solve_highs(model, options) -> Solution:
    try:
        h = make_highs(model, options)
    except SolverError as exc:
        return Solution(Status.ERROR, message=str(exc))

    incumbents: list[tuple[float, float]] = []
    is_mip = model.is_mip and not options.relax_integrality
    t0 = time.perf_counter()
    if is_mip:

        def _on_improve(event):
            incumbents.append((time.perf_counter() - t0, float(event.data_out.objective_function_value)))

        h.cbMipImprovingSolution.subscribe(_on_improve)
    h.run()
    M = highspy.HighsModelStatus
    ms = h.getModelStatus()
    if not is_mip and options.lp_method == "choose" and ms in (M.kNotset, M.kSolveError, M.kUnknown):
        # simplex can break down on badly scaled LPs; retry with the interior point method
        log.info("simplex ended with %s on %r, retrying with ipm", ms, model.name)
        h.clearSolver()
        h.setOptionValue("solver", "ipm")
        h.run()
        ms = h.getModelStatus()
    runtime = time.perf_counter() - t0

    info = h.getInfo()
    has_primal = info.primal_solution_status == highspy.kSolutionStatusFeasible
    values = np.array(h.getSolution().col_value, dtype=float) if has_primal else None
    gap = float(info.mip_gap) if is_mip else 0.0
    bound = float(info.mip_dual_bound) if is_mip else float("nan")
    if ms == M.kOptimal:
        status = Status.OPTIMAL
        if values is None:
            values = np.array(h.getSolution().col_value, dtype=float)
    elif ms == M.kInfeasible:
        status, values = Status.INFEASIBLE, None
    elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
        status, values = (Status.UNBOUNDED if ms == M.kUnbounded else Status.INFEASIBLE), None
    elif ms in (M.kTimeLimit, M.kIterationLimit, M.kInterrupt, M.kSolutionLimit):
        status = Status.TIME_LIMIT if values is not None else Status.NO_INCUMBENT
    else:
        status, values = Status.ERROR, None

    dual_ray = None
    if status == Status.INFEASIBLE and not is_mip:
        try:
            out = h.getDualRay()
            exists, ray = out[-2], out[-1]
            if exists:
                dual_ray = np.asarray(ray, dtype=float)
        except Exception:  # noqa: BLE001 - ray extraction is best effort
            dual_ray = None

    objective = float(info.objective_function_value) if values is not None else float("nan")
    return Solution(
        status=status,
        values=values,
        objective=objective,
        gap=gap,
        bound=bound,
        runtime=runtime,
        incumbents=incumbents,
        message=h.modelStatusToString(ms),
        dual_ray=dual_ray,
    )
