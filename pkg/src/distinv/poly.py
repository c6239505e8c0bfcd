"""H-representation polytopes and linear-image Minkowski sums.

Containment of a Minkowski sum of linear images in a scaled polytope is
expressed through nonnegative multiplier matrices (an extension of Farkas'
lemma).  For a base polytope ``S = {s | Hs s <= hs}`` and target
``Y = {y | Hy y <= hy}``::

    (+)_i L_i S  subset of  alpha * Y
        <=>  exists Z_i >= 0 :  Z_i Hs = Hy L_i,  sum_i Z_i hs <= alpha hy

which is linear jointly in ``Z_i``, the entries of ``L_i`` and ``alpha``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from distinv.solver import Expr, Model, SolveOptions, Status, as_expr, esum


class DimensionError(ValueError):
    pass


class UnboundedPolytopeError(ValueError):
    pass


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class Polytope:
    """``{z | H z <= h}`` with ``h >= 0`` so that the origin is a member."""

    __slots__ = ("H", "h")

    def __init__(self, H, h):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        h = np.asarray(h, dtype=float).ravel()
        if H.shape[0] != h.size:
            raise DimensionError(f"H has {H.shape[0]} rows but h has {h.size} entries")
        if H.shape[0] < 1:
            raise DimensionError("a polytope needs at least one inequality")
        if np.any(h < 0):
            raise ValueError("h must be entrywise nonnegative (origin must be contained)")
        object.__setattr__(self, "H", _readonly(H))
        object.__setattr__(self, "h", _readonly(h))

    def __setattr__(self, key, value):
        raise AttributeError("Polytope is immutable")

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def nrows(self) -> int:
        return self.H.shape[0]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.nrows})"

    def __eq__(self, other):
        return (
            isinstance(other, Polytope)
            and self.H.shape == other.H.shape
            and np.array_equal(self.H, other.H)
            and np.array_equal(self.h, other.h)
        )

    __hash__ = None

    # constructors -------------------------------------------------------

    @classmethod
    def box(cls, upper, lower=None) -> "Polytope":
        """Axis-aligned box ``-lower <= z <= upper`` (``lower`` defaults to ``upper``)."""
        upper = np.asarray(upper, dtype=float).ravel()
        lower = upper if lower is None else np.asarray(lower, dtype=float).ravel()
        d = upper.size
        I = np.eye(d)
        return cls(np.vstack([I, -I]), np.concatenate([upper, lower]))

    @classmethod
    def unit_box(cls, d: int, radius: float = 1.0) -> "Polytope":
        """``radius`` times the unit infinity-norm ball in ``d`` dimensions."""
        return cls.box(np.full(d, float(radius)))

    # basic queries ------------------------------------------------------

    def contains(self, z, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(self.H @ z <= self.h + tol))

    def utilization(self, z) -> np.ndarray:
        """Per-facet ratio ``(H z)_j / h_j``; rows with ``h_j = 0`` report 0 when satisfied."""
        z = np.asarray(z, dtype=float)
        hz = self.H @ z
        out = np.zeros_like(hz)
        pos = self.h > 0
        out[pos] = hz[pos] / self.h[pos]
        out[~pos] = np.where(hz[~pos] > 1e-12, np.inf, 0.0)
        return out

    def support(self, direction) -> float:
        """``max_{z in P} direction . z`` (``inf`` if unbounded)."""
        c = np.asarray(direction, dtype=float)
        res = linprog(-c, A_ub=self.H, b_ub=self.h, bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 3:
            return np.inf
        if res.status != 0:
            raise RuntimeError(f"support LP failed: {res.message}")
        return float(-res.fun)

    def support_point(self, direction) -> np.ndarray:
        """A vertex attaining :meth:`support` (basic solution of the support LP)."""
        c = np.asarray(direction, dtype=float)
        res = linprog(-c, A_ub=self.H, b_ub=self.h, bounds=[(None, None)] * self.dim, method="highs-ds")
        if res.status != 0:
            raise UnboundedPolytopeError(f"support LP failed: {res.message}")
        return res.x

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate ``(lower, upper)`` via support LPs; entries may be infinite."""
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            hi[j] = self.support(e)
            lo[j] = -self.support(-e)
        return lo, hi

    def is_bounded(self) -> bool:
        lo, hi = self.bounding_box()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def is_box(self) -> bool:
        """True if every row is a signed unit vector, one upper and one lower per coordinate."""
        d = self.dim
        if self.nrows != 2 * d:
            return False
        seen = set()
        for row in self.H:
            nz = np.nonzero(row)[0]
            if nz.size != 1 or abs(row[nz[0]]) != 1.0:
                return False
            seen.add((int(nz[0]), int(np.sign(row[nz[0]]))))
        return len(seen) == 2 * d

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """``(lower, upper)`` for a polytope with :meth:`is_box`."""
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for row, b in zip(self.H, self.h):
            j = int(np.nonzero(row)[0][0])
            if row[j] > 0:
                hi[j] = b / row[j]
            else:
                lo[j] = b / row[j]
        return lo, hi

    # transformations ----------------------------------------------------

    def scale(self, factor: float) -> "Polytope":
        """``factor * P``, i.e. ``{z | H z <= factor h}``."""
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        return Polytope(self.H, factor * self.h)

    def dedup(self) -> "Polytope":
        """Drop exactly duplicated rows."""
        rows = np.column_stack([self.H, self.h])
        _, keep = np.unique(rows, axis=0, return_index=True)
        keep = np.sort(keep)
        return Polytope(self.H[keep], self.h[keep])

    # serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Polytope":
        try:
            H, h = data["H"], data["h"]
        except KeyError as exc:
            raise ValueError(f"polytope is missing field {exc.args[0]!r}") from None
        return cls(np.asarray(H, dtype=float).reshape(len(H), -1), h)


# ---------------------------------------------------------------------------
# vertex enumeration (small dimension only)


def vertices(p: Polytope, tol: float = 1e-9) -> np.ndarray:
    """All vertices of a bounded polytope with ``dim <= 3`` by facet-subset intersection."""
    d = p.dim
    if d > 3:
        raise DimensionError("vertex enumeration is limited to dimension <= 3")
    if not p.is_bounded():
        raise UnboundedPolytopeError("cannot enumerate vertices of an unbounded polytope")
    pts = []
    for rows in itertools.combinations(range(p.nrows), d):
        Hs = p.H[list(rows)]
        if abs(np.linalg.det(Hs)) < 1e-12:
            continue
        z = np.linalg.solve(Hs, p.h[list(rows)])
        if np.all(p.H @ z <= p.h + tol * (1 + np.abs(p.h))):
            pts.append(z)
    if not pts:
        return np.zeros((0, d))
    pts = np.array(pts)
    return _unique_rows(pts, 1e-8)


def _unique_rows(pts: np.ndarray, tol: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for z in pts:
        if not any(np.max(np.abs(z - o)) <= tol for o in out):
            out.append(z)
    return np.array(out)


def vertices_2d(p: Polytope) -> np.ndarray:
    """Counterclockwise vertex list of a bounded 2-D polytope (empty array if infeasible)."""
    from scipy.spatial import ConvexHull, HalfspaceIntersection

    if p.dim != 2:
        raise DimensionError(f"vertices_2d expects a 2-D polytope, got dimension {p.dim}")
    norms = np.linalg.norm(p.H, axis=1)
    if np.any(norms == 0):
        if np.any(p.h[norms == 0] < 0):
            return np.zeros((0, 2))
    live = norms > 0
    H, h, norms = p.H[live], p.h[live], norms[live]
    # Chebyshev centre: max r s.t. H z + r ||H_j|| <= h
    res = linprog(
        np.array([0.0, 0.0, -1.0]),
        A_ub=np.column_stack([H, norms]),
        b_ub=h,
        bounds=[(None, None), (None, None), (0, None)],
        method="highs",
    )
    if res.status == 2:
        return np.zeros((0, 2))
    if res.status == 3 or not Polytope(H, h).is_bounded():
        raise UnboundedPolytopeError("polytope is unbounded")
    center, radius = res.x[:2], res.x[2]
    if radius <= 1e-10:
        # degenerate (segment or point): no interior, enumerate directly
        pts = vertices(Polytope(H, h))
        if len(pts) <= 2:
            return pts
        hull = ConvexHull(pts)
        return pts[hull.vertices]
    hs = HalfspaceIntersection(np.column_stack([H, -h]), center)
    pts = hs.intersections
    hull = ConvexHull(pts)
    ordered = pts[hull.vertices]  # counterclockwise for 2-D hulls
    return _unique_rows(ordered, 1e-9)


# ---------------------------------------------------------------------------
# Minkowski sums of linear images


@dataclass(frozen=True)
class MinkowskiMapSet:
    """The set ``(+)_i maps[i] @ base``; an empty map list denotes ``{0}``.

    Maps may be constant arrays or affine :class:`~distinv.solver.Expr`
    objects (when the set is a decision variable of an LP).
    """

    maps: tuple
    base: Polytope
    out_dim: int | None = None

    def __post_init__(self):
        maps = tuple(L if isinstance(L, Expr) else np.atleast_2d(np.asarray(L, dtype=float)) for L in self.maps)
        object.__setattr__(self, "maps", maps)
        for i, L in enumerate(maps[1:], start=1):
            if tuple(L.shape) != tuple(maps[0].shape):
                raise DimensionError(f"map {i} has shape {tuple(L.shape)}, map 0 has {tuple(maps[0].shape)}")
        for i, L in enumerate(maps):
            if len(L.shape) != 2 or L.shape[1] != self.base.dim:
                raise DimensionError(
                    f"map {i} has shape {tuple(L.shape)}, expected (*, {self.base.dim})"
                )
        if maps:
            object.__setattr__(self, "out_dim", int(maps[0].shape[0]))
        elif self.out_dim is None:
            raise DimensionError("an empty MinkowskiMapSet needs an explicit out_dim")

    @property
    def is_symbolic(self) -> bool:
        return any(isinstance(L, Expr) for L in self.maps)

    def evaluate(self, solution) -> "MinkowskiMapSet":
        """Instantiate symbolic maps at a solver solution."""
        maps = tuple(solution.value(L) if isinstance(L, Expr) else np.asarray(L) for L in self.maps)
        return MinkowskiMapSet(maps, self.base, self.out_dim)

    def point(self, witness) -> np.ndarray:
        """``sum_i maps[i] @ witness[i]`` for constant maps."""
        out = np.zeros(self.out_dim)
        for L, w in zip(self.maps, witness):
            out += np.asarray(L) @ np.asarray(w)
        return out


@dataclass
class ContainmentBlock:
    """Certificate variables emitted by :func:`contains_constraints`."""

    Z: list
    alpha: Expr
    mset: MinkowskiMapSet
    target: Polytope
    name: str = ""

    def certificate(self, solution) -> "ContainmentCertificate":
        return ContainmentCertificate(
            Z=[np.asarray(solution.value(z)) for z in self.Z],
            alpha=float(solution.value(self.alpha)),
        )


@dataclass
class ContainmentCertificate:
    Z: list
    alpha: float
    residuals: dict = field(default_factory=dict)

    def check(self, mset: MinkowskiMapSet, target: Polytope) -> dict:
        """Residuals of every certificate condition for constant maps."""
        base = mset.base
        eq = 0.0
        neg = 0.0
        total = np.zeros(target.nrows)
        for Z, L in zip(self.Z, mset.maps):
            eq = max(eq, float(np.max(np.abs(Z @ base.H - target.H @ np.asarray(L)), initial=0.0)))
            neg = max(neg, float(np.max(-Z, initial=0.0)))
            total += Z @ base.h
        sum_res = float(np.max(total - self.alpha * target.h, initial=0.0))
        self.residuals = {"equality": eq, "nonnegativity": neg, "sum": max(sum_res, 0.0)}
        return self.residuals

    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else float("nan")


def contains_constraints(model: Model, mset: MinkowskiMapSet, target: Polytope, alpha, name: str = "") -> ContainmentBlock:
    """Add certificate constraints for ``mset subset of alpha * target`` to ``model``.

    ``alpha`` may be a number or an affine scalar expression in the model's
    variables; the maps of ``mset`` may be affine expressions too.
    """
    if mset.out_dim != target.dim:
        raise DimensionError(f"set dimension {mset.out_dim} does not match target dimension {target.dim}")
    if np.any(target.h < 0):
        raise ValueError("target.h must be nonnegative")
    base = mset.base
    alpha = as_expr(alpha).reshape(())
    Z = []
    for i, L in enumerate(mset.maps):
        if tuple(L.shape) != (target.dim, base.dim):
            raise DimensionError(f"map {i} has shape {tuple(L.shape)}, expected {(target.dim, base.dim)}")
        Zi = model.add_vars((target.nrows, base.nrows), lb=0.0, name=f"{name}Z{i}")
        model.add_eq(Zi @ base.H, target.H @ L, name=f"{name}farkas{i}")
        Z.append(Zi)
    if Z:
        total = esum(Zi @ base.h for Zi in Z)
        model.add_le(total, alpha * target.h, name=f"{name}budget")
    else:
        model.add_ge(alpha * target.h, 0.0, name=f"{name}budget")
    return ContainmentBlock(Z=Z, alpha=alpha, mset=mset, target=target, name=name)


def certify_containment(mset: MinkowskiMapSet, target: Polytope, alpha: float, options: SolveOptions | None = None):
    """Solve the certificate LP for constant maps; return the certificate or ``None``."""
    model = Model("containment")
    block = contains_constraints(model, mset, target, alpha)
    sol = model.solve(options)
    if sol.status != Status.OPTIMAL:
        return None
    cert = block.certificate(sol)
    cert.check(mset, target)
    return cert


def min_containment_scale(mset: MinkowskiMapSet, target: Polytope, options: SolveOptions | None = None) -> float:
    """Smallest ``alpha >= 0`` with ``mset subset of alpha * target`` (``inf`` if none)."""
    model = Model("min-scale")
    alpha = model.add_vars((), lb=0.0, name="alpha")
    contains_constraints(model, mset, target, alpha)
    model.minimize(alpha)
    sol = model.solve(options)
    if sol.status != Status.OPTIMAL:
        return np.inf
    return float(sol.value(alpha))


# ---------------------------------------------------------------------------
# membership


class MembershipOracle:
    """Repeated membership tests ``point in (+)_i L_i S`` for one constant set.

    The LP is assembled once; each query only changes the equality right-hand
    side, so HiGHS can warm-start from the previous basis.  It minimises a
    uniform slack ``t`` on the base rows (relative to the row norms) and
    accepts when ``t <= tol``, so points on the boundary that carry rounding
    error are not rejected.
    """

    def __init__(self, mset: MinkowskiMapSet, tol: float = 1e-7):
        import highspy

        from distinv.solver.highs_backend import to_highs_lp

        self.mset = mset
        self.tol = tol
        base = mset.base
        model = Model("membership")
        self._w = [model.add_vars(base.dim, name=f"w{i}") for i in range(len(mset.maps))]
        self._t = model.add_vars((), lb=0.0, name="slack")
        norms = np.linalg.norm(base.H, axis=1)
        for i, w in enumerate(self._w):
            model.add_le(base.H @ w - norms * self._t, base.h, name=f"base{i}")
        self._n_base_rows = model.num_rows
        if self._w:
            recon = esum(np.asarray(L) @ w for L, w in zip(mset.maps, self._w))
            model.add_eq(recon, np.zeros(mset.out_dim), name="recon")
        model.minimize(self._t)
        self._model = model
        self._h = highspy.Highs()
        self._h.silent()
        self._h.setOptionValue("primal_feasibility_tolerance", min(tol, 1e-7))
        self._h.passModel(to_highs_lp(model))
        self._highspy = highspy

    def query(self, point):
        """Return ``(inside, witness)``; ``witness`` is a list of base points or ``None``."""
        point = np.asarray(point, dtype=float).ravel()
        if point.size != self.mset.out_dim:
            raise DimensionError(f"point has dimension {point.size}, set has {self.mset.out_dim}")
        if not self._w:
            inside = bool(np.max(np.abs(point), initial=0.0) <= self.tol)
            return inside, ([] if inside else None)
        d = self.mset.out_dim
        idx = np.arange(self._n_base_rows, self._n_base_rows + d, dtype=np.int32)
        self._h.changeRowsBounds(d, idx, point, point)
        self._h.run()
        ms = self._h.getModelStatus()
        if ms != self._highspy.HighsModelStatus.kOptimal:
            return False, None
        x = np.array(self._h.getSolution().col_value)
        if self._t.value(x) > self.tol:
            return False, None
        witness = [w.value(x) for w in self._w]
        return True, witness


def membership(point, mset: MinkowskiMapSet, tol: float = 1e-7):
    """Decide ``point in mset``; returns ``(inside, witness)``."""
    return MembershipOracle(mset, tol).query(point)


# ---------------------------------------------------------------------------
# planar projections


def _support_point_sum(mset: MinkowskiMapSet, P: np.ndarray, d: np.ndarray, box) -> np.ndarray:
    """Maximiser of ``d . P z`` over ``z`` in ``mset`` (returned as the projected point)."""
    out = np.zeros(2)
    for L in mset.maps:
        PL = P @ np.asarray(L)
        c = PL.T @ d
        if box is not None:
            lo, hi = box
            w = np.where(c > 0, hi, np.where(c < 0, lo, 0.5 * (lo + hi)))
        else:
            w = mset.base.support_point(c)
        out += PL @ w
    return out


def project_2d(mset: MinkowskiMapSet, coords, tol: float = 1e-9, max_iter: int = 10000) -> np.ndarray:
    """Exact projection of ``mset`` onto two coordinates, as counter-clockwise vertices.

    Edges are refined by support queries along outward normals until no query
    finds a point beyond the current polygon; for a polytope this terminates
    at the exact projection.
    """
    coords = list(coords)
    if len(coords) != 2:
        raise DimensionError("exactly two coordinates are needed")
    P = np.zeros((2, mset.out_dim))
    P[0, coords[0]] = 1.0
    P[1, coords[1]] = 1.0
    box = mset.base.box_bounds() if mset.base.is_box() else None

    def sp(d):
        return _support_point_sum(mset, P, np.asarray(d, dtype=float), box)

    angles = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
    pts = [sp([np.cos(a), np.sin(a)]) for a in angles]
    poly = _ccw_unique(pts, tol)
    if len(poly) < 3:
        return np.array(poly)
    for _ in range(max_iter):
        grown = False
        out = []
        for i in range(len(poly)):
            a, b = poly[i], poly[(i + 1) % len(poly)]
            out.append(a)
            e = b - a
            normal = np.array([e[1], -e[0]])
            if np.linalg.norm(normal) <= tol:
                continue
            q = sp(normal)
            if normal @ (q - a) > tol * max(1.0, np.linalg.norm(normal)):
                out.append(q)
                grown = True
        poly = _ccw_unique(out, tol)
        if not grown:
            break
    return np.array(poly)


def _ccw_unique(pts, tol):
    pts = np.array(pts, dtype=float)
    keep = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= tol for q in keep):
            keep.append(p)
    if len(keep) < 3:
        return keep
    c = np.mean(keep, axis=0)
    keep.sort(key=lambda p: np.arctan2(p[1] - c[1], p[0] - c[0]))
    # drop points that are not strict corners
    out = []
    n = len(keep)
    for i in range(n):
        a, b, d = keep[i - 1], keep[i], keep[(i + 1) % n]
        cross = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
        if cross > tol:
            out.append(b)
    return out
