"""MPS interchange through HiGHS' reader/writer."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from distinv.solver.expr import Expr
from distinv.solver.highs_backend import _require, to_highs_lp
from distinv.solver.model import Model, SolverError


def write_mps(model: Model, path) -> None:
    _require()
    import highspy

    h = highspy.Highs()
    h.silent()
    h.passModel(to_highs_lp(model))
    path = Path(path)
    if path.suffix.lower() != ".mps":
        raise ValueError("MPS files must use the .mps suffix")
    if h.writeModel(str(path)) == highspy.HighsStatus.kError:
        raise SolverError(f"failed to write {path}")


def read_mps(path, name: str | None = None) -> Model:
    """Parse an MPS file into a :class:`Model` with a single variable block ``x``."""
    _require()
    import highspy

    h = highspy.Highs()
    h.silent()
    if h.readModel(str(path)) == highspy.HighsStatus.kError:
        raise SolverError(f"failed to read {path}")
    lp = h.getLp()
    n, m = lp.num_col_, lp.num_row_
    model = Model(name or Path(path).stem)
    integer = np.zeros(n, dtype=bool)
    if len(lp.integrality_):
        integer = np.array([t != highspy.HighsVarType.kContinuous for t in lp.integrality_])
    lb = np.array(lp.col_lower_, dtype=float)
    ub = np.array(lp.col_upper_, dtype=float)
    # keep binaries as a separate flag so Model bookkeeping stays per-entry
    model._lb.append(lb)
    model._ub.append(ub)
    model._int.append(integer)
    model.registry["x"] = (0, (n,))
    model.num_vars = n
    x = model.var("x")

    a = lp.a_matrix_
    data = (np.array(a.value_, dtype=float), np.array(a.index_, dtype=np.int64), np.array(a.start_, dtype=np.int64))
    if a.format_ == highspy.MatrixFormat.kColwise:
        A = sp.csc_matrix(data, shape=(m, n)).tocsr()
    else:
        A = sp.csr_matrix(data, shape=(m, n))
    if m:
        model.add_rows(Expr(A, np.zeros(m), (m,)), np.array(lp.row_lower_, dtype=float), np.array(lp.row_upper_, dtype=float), name="rows")
    obj = np.array(lp.col_cost_, dtype=float) @ x + float(lp.offset_)
    if lp.sense_ == highspy.ObjSense.kMaximize:
        model.maximize(obj)
    else:
        model.minimize(obj)
    return model
