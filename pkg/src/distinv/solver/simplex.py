"""Exact dense simplex for tiny models.

Used as an independent oracle in tests.  All arithmetic is carried out in
:class:`fractions.Fraction`, so results are exact for the (rational) float
input data.  Bland's rule prevents cycling.  Integer variables are handled by
enumerating every assignment, which is only sensible for a handful of
binaries.
"""

from __future__ import annotations

import itertools
import time
from fractions import Fraction

import numpy as np

from distinv.solver.model import Solution, SolverError, Status

MAX_VARS = 60
MAX_ENUM = 4096


def _lp_standard(c, A, lo, hi, lb, ub):
    """Rewrite ``min c x, lo <= A x <= hi, lb <= x <= ub`` as ``min c' y, A' y = b, y >= 0``.

    Returns the standard-form data and a recovery map ``x = T y + shift``.
    """
    n = len(c)
    cols = []  # per original var: list of (standard col, sign)
    shift = [Fraction(0)] * n
    ncol = 0
    extra_rows = []  # (col, bound) for y <= bound
    for j in range(n):
        l, u = lb[j], ub[j]
        if np.isfinite(l):
            shift[j] = Fraction(l)
            cols.append([(ncol, 1)])
            if np.isfinite(u):
                extra_rows.append((ncol, Fraction(u) - Fraction(l)))
            ncol += 1
        elif np.isfinite(u):
            shift[j] = Fraction(u)
            cols.append([(ncol, -1)])
            ncol += 1
        else:
            cols.append([(ncol, 1), (ncol + 1, -1)])
            ncol += 2

    rows = []  # (dict col->coef, rhs, kind) kind in {"eq", "le", "ge"}
    Ad = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
    for i in range(Ad.shape[0]):
        coef: dict[int, Fraction] = {}
        const = Fraction(0)
        for j in np.nonzero(Ad[i])[0]:
            a = Fraction(Ad[i, j])
            const += a * shift[j]
            for col, sgn in cols[j]:
                coef[col] = coef.get(col, Fraction(0)) + sgn * a
        l, u = lo[i], hi[i]
        if np.isfinite(l) and np.isfinite(u) and l == u:
            rows.append((coef, Fraction(l) - const, "eq"))
            continue
        if np.isfinite(u):
            rows.append((coef, Fraction(u) - const, "le"))
        if np.isfinite(l):
            rows.append((coef, Fraction(l) - const, "ge"))
    for col, bound in extra_rows:
        rows.append(({col: Fraction(1)}, bound, "le"))

    nslack = sum(1 for r in rows if r[2] != "eq")
    total = ncol + nslack
    Astd = []
    b = []
    s = ncol
    for coef, rhs, kind in rows:
        row = [Fraction(0)] * total
        for col, a in coef.items():
            row[col] = a
        if kind == "le":
            row[s] = Fraction(1)
            s += 1
        elif kind == "ge":
            row[s] = Fraction(-1)
            s += 1
        if rhs < 0:
            row = [-v for v in row]
            rhs = -rhs
        Astd.append(row)
        b.append(rhs)

    cstd = [Fraction(0)] * total
    const_obj = Fraction(0)
    for j in range(n):
        cj = Fraction(c[j])
        const_obj += cj * shift[j]
        for col, sgn in cols[j]:
            cstd[col] += sgn * cj
    return cstd, Astd, b, cols, shift, const_obj


def _pivot(T, basis, r, k):
    piv = T[r][k]
    T[r] = [v / piv for v in T[r]]
    for i in range(len(T)):
        if i != r and T[i][k] != 0:
            f = T[i][k]
            T[i] = [a - f * bb for a, bb in zip(T[i], T[r])]
    basis[r] = k


def _run_simplex(T, basis, allowed):
    """Minimise the objective in the last row of ``T`` (stored as reduced costs)."""
    m = len(T) - 1
    while True:
        obj = T[m]
        k = next((j for j in allowed if obj[j] < 0), None)
        if k is None:
            return "optimal"
        best = None
        for i in range(m):
            if T[i][k] > 0:
                ratio = T[i][-1] / T[i][k]
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return "unbounded"
        _pivot(T, basis, best[1], k)


def solve_lp_exact(c, A, lo, hi, lb, ub):
    """Return ``(status, x, objective)`` with ``x`` a list of Fractions."""
    cstd, Astd, b, cols, shift, _ = _lp_standard(c, A, lo, hi, lb, ub)
    m = len(Astd)
    ncol = len(cstd)
    # phase 1: artificial per row
    T = []
    for i in range(m):
        art = [Fraction(0)] * m
        art[i] = Fraction(1)
        T.append(Astd[i] + art + [b[i]])
    basis = [ncol + i for i in range(m)]
    phase1 = [Fraction(0)] * (ncol + m + 1)
    for i in range(m):
        for j in range(ncol):
            phase1[j] -= T[i][j]
        phase1[-1] -= T[i][-1]
    T.append(phase1)
    _run_simplex(T, basis, range(ncol))
    if T[m][-1] != 0:
        return "infeasible", None, None
    # drive remaining artificials out of the basis
    for i in range(m):
        if basis[i] >= ncol:
            k = next((j for j in range(ncol) if T[i][j] != 0), None)
            if k is not None:
                _pivot(T, basis, i, k)
    keep = [i for i in range(m) if basis[i] < ncol]
    T = [T[i][:ncol] + [T[i][-1]] for i in keep]
    basis = [basis[i] for i in keep]
    obj = list(cstd) + [Fraction(0)]
    for i, bi in enumerate(basis):
        if obj[bi] != 0:
            f = obj[bi]
            obj = [a - f * r for a, r in zip(obj, T[i])]
    T.append(obj)
    status = _run_simplex(T, basis, range(ncol))
    if status == "unbounded":
        return "unbounded", None, None
    y = [Fraction(0)] * ncol
    for i, bi in enumerate(basis):
        y[bi] = T[i][-1]
    x = []
    for j, parts in enumerate(cols):
        x.append(shift[j] + sum(sgn * y[col] for col, sgn in parts))
    value = sum((Fraction(c[j]) * x[j] for j in range(len(c))), Fraction(0))
    return "optimal", x, value


def solve_reference(model, options) -> Solution:
    if model.num_vars > MAX_VARS:
        raise SolverError(f"reference solver is limited to {MAX_VARS} variables, model has {model.num_vars}")
    t0 = time.perf_counter()
    c, c0, A, lo, hi, lb, ub, integer = model.arrays()
    sign = -1.0 if model.sense == "max" else 1.0
    c = sign * c
    int_idx = np.nonzero(integer)[0]
    if int_idx.size:
        ranges = []
        for j in int_idx:
            if not (np.isfinite(lb[j]) and np.isfinite(ub[j])):
                raise SolverError("reference solver needs finite bounds on integer variables")
            ranges.append(range(int(np.ceil(lb[j])), int(np.floor(ub[j])) + 1))
        if np.prod([len(r) for r in ranges], dtype=float) > MAX_ENUM:
            raise SolverError("too many integer assignments for enumeration")
        assignments = itertools.product(*ranges)
    else:
        assignments = [()]

    best = None
    saw_unbounded = False
    for assign in assignments:
        lb2, ub2 = lb.copy(), ub.copy()
        for j, v in zip(int_idx, assign):
            lb2[j] = ub2[j] = v
        status, x, val = solve_lp_exact(c, A, lo, hi, lb2, ub2)
        if status == "unbounded":
            saw_unbounded = True
            continue
        if status == "optimal" and (best is None or val < best[1]):
            best = (x, val)
    runtime = time.perf_counter() - t0
    if best is None:
        st = Status.UNBOUNDED if saw_unbounded else Status.INFEASIBLE
        return Solution(st, runtime=runtime)
    if saw_unbounded:
        return Solution(Status.UNBOUNDED, runtime=runtime)
    x = np.array([float(v) for v in best[0]])
    objective = sign * float(best[1]) + c0
    return Solution(Status.OPTIMAL, values=x, objective=objective, gap=0.0, runtime=runtime,
                    message="exact dense simplex")
