"""Vectorised affine expressions over model variables.

An :class:`Expr` is an array of affine functions ``coef @ x + const`` of the
model's variable vector ``x``.  Rows of ``coef`` follow the row-major
flattening of ``shape``.  Only the operations the synthesis problems need are
supported: sums, scaling, and products with constant matrices on either side.
"""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp


def _pad(mat: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    if mat.shape[1] == ncols:
        return mat
    mat = mat.copy()
    mat.resize((mat.shape[0], ncols))
    return mat


class Expr:
    # ndarray (op) Expr must defer to the Expr reflected methods
    __array_ufunc__ = None

    def __init__(self, coef, const, shape):
        self.shape = tuple(int(s) for s in shape)
        size = int(np.prod(self.shape, dtype=int))
        self.coef = sp.csr_matrix(coef)
        self.const = np.asarray(const, dtype=float).reshape(size)
        if self.coef.shape[0] != size:
            raise ValueError(f"coefficient rows {self.coef.shape[0]} do not match shape {self.shape}")

    # construction -----------------------------------------------------

    @classmethod
    def constant(cls, value) -> "Expr":
        value = np.asarray(value, dtype=float)
        return cls(sp.csr_matrix((value.size, 0)), value.ravel(), value.shape)

    @classmethod
    def variables(cls, start: int, shape) -> "Expr":
        size = int(np.prod(shape, dtype=int))
        coef = sp.csr_matrix(
            (np.ones(size), (np.arange(size), start + np.arange(size))), shape=(size, start + size)
        )
        return cls(coef, np.zeros(size), shape)

    # basic properties -------------------------------------------------

    @property
    def size(self) -> int:
        return self.const.size

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def is_constant(self) -> bool:
        return self.coef.nnz == 0

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        return f"Expr(shape={self.shape}, nnz={self.coef.nnz})"

    def value(self, x) -> np.ndarray:
        """Evaluate at the variable assignment ``x``."""
        x = np.asarray(x, dtype=float)
        coef = self.coef
        if coef.shape[1] > x.size:
            raise ValueError("assignment shorter than the expression's variable range")
        vals = coef @ x[: coef.shape[1]] + self.const
        return vals.reshape(self.shape)

    # reshaping and indexing ------------------------------------------

    def reshape(self, *shape) -> "Expr":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        new = np.empty(self.shape).reshape(shape).shape
        return Expr(self.coef, self.const, new)

    def ravel(self) -> "Expr":
        return Expr(self.coef, self.const, (self.size,))

    @property
    def T(self) -> "Expr":
        if self.ndim < 2:
            return self
        idx = np.arange(self.size).reshape(self.shape).T
        return self._rows(idx)

    def _rows(self, idx) -> "Expr":
        idx = np.asarray(idx)
        flat = idx.ravel()
        return Expr(self.coef[flat], self.const[flat], idx.shape)

    def __getitem__(self, key) -> "Expr":
        idx = np.arange(self.size).reshape(self.shape)[key]
        return self._rows(np.asarray(idx))

    def sum(self) -> "Expr":
        coef = sp.csr_matrix(self.coef.sum(axis=0))
        return Expr(coef, [self.const.sum()], ())

    # arithmetic -------------------------------------------------------

    def _binary(self, other, sign: float) -> "Expr":
        other = as_expr(other)
        shape = np.broadcast_shapes(self.shape, other.shape)
        a, b = self._broadcast(shape), other._broadcast(shape)
        ncols = max(a.coef.shape[1], b.coef.shape[1])
        coef = _pad(a.coef, ncols) + sign * _pad(b.coef, ncols)
        return Expr(coef, a.const + sign * b.const, shape)

    def _broadcast(self, shape) -> "Expr":
        if self.shape == tuple(shape):
            return self
        idx = np.broadcast_to(np.arange(self.size).reshape(self.shape), shape)
        return self._rows(idx)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __radd__(self, other):
        return self._binary(other, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return as_expr(other)._binary(self, -1.0)

    def __neg__(self):
        return Expr(-self.coef, -self.const, self.shape)

    def __mul__(self, other):
        if isinstance(other, Expr):
            if other.is_constant:
                other = other.const.reshape(other.shape)
            elif self.is_constant:
                return other * self.const.reshape(self.shape)
            else:
                raise TypeError("product of two non-constant expressions is not affine")
        if isinstance(other, numbers.Number):
            return Expr(self.coef * float(other), self.const * float(other), self.shape)
        other = np.asarray(other, dtype=float)
        if other.ndim == 0:
            return self * float(other)
        if self.size == 1:
            # scalar expression times an array: outer product
            flat = other.ravel()
            coef = sp.csr_matrix(sp.kron(sp.csr_matrix(flat[:, None]), self.coef))
            return Expr(coef, flat * self.const[0], other.shape)
        shape = np.broadcast_shapes(self.shape, other.shape)
        expr = self._broadcast(shape)
        weights = np.broadcast_to(other, shape).ravel()
        return Expr(sp.diags(weights) @ expr.coef, weights * expr.const, shape)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __matmul__(self, other):
        """``self @ D`` for a constant matrix or vector ``D``."""
        if isinstance(other, Expr):
            if not other.is_constant:
                raise TypeError("product of two non-constant expressions is not affine")
            other = other.const.reshape(other.shape)
        D = np.asarray(other, dtype=float)
        if self.ndim == 1:
            if D.shape[0] != self.shape[0]:
                raise ValueError(f"shape mismatch {self.shape} @ {D.shape}")
            Dt = sp.csr_matrix(D.reshape(D.shape[0], -1).T)
            out_shape = D.shape[1:]
            return Expr(Dt @ self.coef, Dt @ self.const, out_shape)
        if self.ndim != 2 or D.shape[0] != self.shape[1]:
            raise ValueError(f"shape mismatch {self.shape} @ {D.shape}")
        p = self.shape[0]
        D2 = D.reshape(D.shape[0], -1)
        op = sp.kron(sp.identity(p, format="csr"), sp.csr_matrix(D2.T), format="csr")
        out_shape = (p,) + D.shape[1:]
        return Expr(op @ self.coef, op @ self.const, out_shape)

    def __rmatmul__(self, other):
        """``C @ self`` for a constant matrix ``C``."""
        C = np.asarray(other, dtype=float)
        if C.ndim == 1:
            C = C[None, :]
            squeeze = True
        else:
            squeeze = False
        if C.shape[1] != self.shape[0]:
            raise ValueError(f"shape mismatch {C.shape} @ {self.shape}")
        if self.ndim == 1:
            Cs = sp.csr_matrix(C)
            out = Expr(Cs @ self.coef, Cs @ self.const, (C.shape[0],))
            return out.reshape(()) if squeeze else out
        q = int(np.prod(self.shape[1:], dtype=int))
        op = sp.kron(sp.csr_matrix(C), sp.identity(q, format="csr"), format="csr")
        shape = (C.shape[0],) + self.shape[1:]
        out = Expr(op @ self.coef, op @ self.const, shape)
        return out.reshape(self.shape[1:]) if squeeze else out


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Expr.constant(value)


def stack(exprs, axis: int = 0) -> Expr:
    """Stack same-shaped expressions along a new leading axis."""
    if axis != 0:
        raise NotImplementedError("only axis=0 stacking is supported")
    exprs = [as_expr(e) for e in exprs]
    shape = exprs[0].shape
    if any(e.shape != shape for e in exprs):
        raise ValueError("stack requires identical shapes")
    ncols = max(e.coef.shape[1] for e in exprs)
    coef = sp.vstack([_pad(e.coef, ncols) for e in exprs], format="csr")
    const = np.concatenate([e.const for e in exprs])
    return Expr(coef, const, (len(exprs),) + shape)


def esum(exprs) -> Expr:
    """Sum an iterable of expressions (or constants) of matching shape."""
    total = None
    for e in exprs:
        total = as_expr(e) if total is None else total + e
    if total is None:
        raise ValueError("esum of an empty sequence")
    return total
