"""JSON problem configuration with a versioned schema.

Layout::

    {
      "schema": "distinv.config/1",
      "name": "...",
      "system": {"subsystems": [...], "couplings": [...]},
      "sets": {"X": {"H": ..., "h": ...}, "U": ..., "W": ...},
      "K": 6,
      "graph": {"nodes": [...], "edges": [[from, to], ...]},   # optional
      "costs": [[...], ...],                                   # optional, N x N
      "solver": {"time_limit": null, "mip_gap": null, "tol": 1e-7,
                 "big_m": 1000.0, "big_m_policy": "derived"},
      "seed": 0
    }

A set may also be given as ``{"box": r}`` (radius ``r`` around the origin, a
scalar or one radius per coordinate); it is stored in H-form afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from distinv.graph import CommGraph, GraphError
from distinv.network import NetworkError, NetworkSystem
from distinv.poly import Polytope

SCHEMA = "distinv.config/1"
SOLVER_DEFAULTS = {"time_limit": None, "mip_gap": None, "tol": 1e-7, "big_m": 1e3, "big_m_policy": "derived"}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


@dataclass
class ProblemConfig:
    system: NetworkSystem
    X: Polytope
    U: Polytope
    W: Polytope
    K: int
    graph: CommGraph | None = None
    costs: np.ndarray | None = None
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        sys = self.system
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError("K: must be a positive integer")
        self.K = int(self.K)
        for key, P, d in (("X", self.X, sys.n), ("U", self.U, sys.m), ("W", self.W, sys.n)):
            if P.dim != d:
                raise ConfigError(f"sets.{key}: dimension {P.dim}, expected {d}")
        if self.graph is not None:
            if set(self.graph.nodes) != set(sys.ids):
                raise ConfigError(f"graph.nodes: {list(self.graph.nodes)} do not match subsystems {sys.ids}")
            if list(self.graph.nodes) != sys.ids:
                # reorder to the subsystem declaration order
                self.graph = CommGraph.from_edges(sys.ids, self.graph.edges)
        if self.costs is not None:
            self.costs = np.asarray(self.costs, dtype=float)
            if self.costs.shape != (sys.N, sys.N):
                raise ConfigError(f"costs: shape {self.costs.shape}, expected {(sys.N, sys.N)}")
            if np.any(self.costs < 0):
                raise ConfigError("costs: entries must be nonnegative")
        unknown = set(self.solver) - set(SOLVER_DEFAULTS)
        if unknown:
            raise ConfigError(f"solver: unknown option(s) {sorted(unknown)}")
        self.solver = {**SOLVER_DEFAULTS, **self.solver}

    def cost_matrix(self) -> np.ndarray:
        """Configured costs, or one per directed link."""
        if self.costs is not None:
            return self.costs
        N = self.system.N
        return np.ones((N, N)) - np.eye(N)

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA,
            "name": self.name,
            "system": self.system.to_dict(),
            "sets": {"X": self.X.to_dict(), "U": self.U.to_dict(), "W": self.W.to_dict()},
            "K": self.K,
            "solver": dict(self.solver),
            "seed": self.seed,
        }
        if self.graph is not None:
            g = self.graph.to_dict()
            out["graph"] = {"nodes": g["nodes"], "edges": g["edges"]}
        if self.costs is not None:
            out["costs"] = self.costs.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        schema = data.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"schema: unsupported version {schema!r} (expected {SCHEMA!r})")
        for key in ("system", "sets", "K"):
            if key not in data:
                raise ConfigError(f"{key}: missing section")
        try:
            system = NetworkSystem.from_dict(data["system"])
        except (NetworkError, ValueError, TypeError) as exc:
            raise ConfigError(f"system: {exc}") from None
        sets = data["sets"]
        parsed = {}
        for key in ("X", "U", "W"):
            if key not in sets:
                raise ConfigError(f"sets.{key}: missing section")
            parsed[key] = _parse_set(sets[key], f"sets.{key}", system.n if key != "U" else system.m)
        graph = None
        if data.get("graph") is not None:
            try:
                graph = CommGraph.from_dict(data["graph"])
            except (GraphError, TypeError) as exc:
                raise ConfigError(f"graph: {exc}") from None
        return cls(
            system=system,
            X=parsed["X"],
            U=parsed["U"],
            W=parsed["W"],
            K=data["K"],
            graph=graph,
            costs=data.get("costs"),
            solver=dict(data.get("solver") or {}),
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "")),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def _parse_set(spec, where: str, dim: int) -> Polytope:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    try:
        if "box" in spec:
            r = np.broadcast_to(np.asarray(spec["box"], dtype=float), (dim,))
            if np.any(r < 0):
                raise ConfigError(f"{where}.box: radii must be nonnegative")
            return Polytope.box(r)
        return Polytope.from_dict(spec)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def loads(text: str) -> ProblemConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return ProblemConfig.from_dict(data)


def load(path) -> ProblemConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)
