"""Networked linear systems: subsystems, couplings and the stacked dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NetworkError(ValueError):
    """Invalid network description (unknown id, bad shape, duplicate coupling)."""


def _mat(a, name: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise NetworkError(f"{name} must be a matrix, got array of dimension {a.ndim}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Subsystem:
    id: str
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, f"A of {self.id}")
        B = _mat(self.B, f"B of {self.id}")
        if A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise NetworkError(f"A of subsystem {self.id!r} must be square, got {A.shape}")
        if B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise NetworkError(f"B of subsystem {self.id!r} has shape {B.shape}, expected ({A.shape[0]}, m>=1)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Coupling:
    """Influence of subsystem ``source`` on subsystem ``target``."""

    source: str
    target: str
    A: np.ndarray | None = None
    B: np.ndarray | None = None

    def __post_init__(self):
        if self.source == self.target:
            raise NetworkError(f"coupling from {self.source!r} to itself")
        if self.A is not None:
            object.__setattr__(self, "A", _mat(self.A, "coupling A"))
        if self.B is not None:
            object.__setattr__(self, "B", _mat(self.B, "coupling B"))


@dataclass(frozen=True)
class NetworkSystem:
    subsystems: tuple
    couplings: tuple
    A: np.ndarray
    B: np.ndarray
    state_owner: np.ndarray
    control_owner: np.ndarray
    _index: dict = field(repr=False, compare=False)

    @property
    def N(self) -> int:
        return len(self.subsystems)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.subsystems]

    def index(self, sid: str) -> int:
        try:
            return self._index[sid]
        except KeyError:
            raise NetworkError(f"unknown subsystem {sid!r}") from None

    def state_slice(self, s: int) -> slice:
        idx = np.nonzero(self.state_owner == s)[0]
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def control_slice(self, s: int) -> slice:
        idx = np.nonzero(self.control_owner == s)[0]
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def step(self, x, u, w) -> np.ndarray:
        """``A x + B u + w``."""
        x, u, w = (np.asarray(v, dtype=float).ravel() for v in (x, u, w))
        if x.size != self.n or u.size != self.m or w.size != self.n:
            raise NetworkError(
                f"step expects sizes (n={self.n}, m={self.m}, n={self.n}), got ({x.size}, {u.size}, {w.size})"
            )
        return self.A @ x + self.B @ u + w

    def to_dict(self) -> dict:
        return {
            "subsystems": [{"id": s.id, "A": s.A.tolist(), "B": s.B.tolist()} for s in self.subsystems],
            "couplings": [
                {
                    "from": c.source,
                    "to": c.target,
                    **({"A": c.A.tolist()} if c.A is not None else {}),
                    **({"B": c.B.tolist()} if c.B is not None else {}),
                }
                for c in self.couplings
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSystem":
        try:
            subs = [Subsystem(s["id"], s["A"], s["B"]) for s in data["subsystems"]]
            coups = [Coupling(c["from"], c["to"], c.get("A"), c.get("B")) for c in data.get("couplings", [])]
        except KeyError as exc:
            raise NetworkError(f"system description is missing field {exc.args[0]!r}") from None
        return assemble(subs, coups)


def assemble(subsystems, couplings=()) -> NetworkSystem:
    """Stack subsystem equations into ``x+ = A x + B u + w`` (declaration order)."""
    subsystems = tuple(subsystems)
    couplings = tuple(couplings)
    if not subsystems:
        raise NetworkError("a network needs at least one subsystem")
    index: dict[str, int] = {}
    for i, s in enumerate(subsystems):
        if s.id in index:
            raise NetworkError(f"duplicate subsystem id {s.id!r}")
        index[s.id] = i
    ns = [s.n for s in subsystems]
    ms = [s.m for s in subsystems]
    xo = np.concatenate([[0], np.cumsum(ns)])
    uo = np.concatenate([[0], np.cumsum(ms)])
    n, m = int(xo[-1]), int(uo[-1])
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for i, s in enumerate(subsystems):
        A[xo[i] : xo[i + 1], xo[i] : xo[i + 1]] = s.A
        B[xo[i] : xo[i + 1], uo[i] : uo[i + 1]] = s.B
    seen = set()
    for c in couplings:
        for sid in (c.source, c.target):
            if sid not in index:
                raise NetworkError(f"coupling references unknown subsystem {sid!r}")
        key = (c.source, c.target)
        if key in seen:
            raise NetworkError(f"duplicate coupling {c.source!r} -> {c.target!r}")
        seen.add(key)
        j, i = index[c.source], index[c.target]
        if c.A is not None:
            if c.A.shape != (ns[i], ns[j]):
                raise NetworkError(f"coupling {key} A has shape {c.A.shape}, expected {(ns[i], ns[j])}")
            A[xo[i] : xo[i + 1], xo[j] : xo[j + 1]] = c.A
        if c.B is not None:
            if c.B.shape != (ns[i], ms[j]):
                raise NetworkError(f"coupling {key} B has shape {c.B.shape}, expected {(ns[i], ms[j])}")
            B[xo[i] : xo[i + 1], uo[j] : uo[j + 1]] = c.B
    A.setflags(write=False)
    B.setflags(write=False)
    state_owner = np.repeat(np.arange(len(subsystems)), ns)
    control_owner = np.repeat(np.arange(len(subsystems)), ms)
    state_owner.setflags(write=False)
    control_owner.setflags(write=False)
    return NetworkSystem(subsystems, couplings, A, B, state_owner, control_owner, index)


def step(sys: NetworkSystem, x, u, w) -> np.ndarray:
    return sys.step(x, u, w)
