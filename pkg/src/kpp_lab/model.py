"""Problem definitions, structural checks and the componentwise order.

The unknown of every solver is a :class:`StateField`: ``n`` species sampled
at the cell centres of a rectangular :class:`DomainGrid`, stored
species-major (all nodes of species 0, then all nodes of species 1, ...).
Species and node indices are 0-based throughout the Python API.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeMismatchError
from .nonlinearity import LotkaVolterra, Nonlinearity, SampledNonlinearity

DEFAULT_ORDER_TOL = 1e-9


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DomainGrid:
    """Cell-centred rectangular grid on ``[0, extent[0]] x ...``.

    Nodes sit at cell midpoints, ``x_i = (i + 1/2) h``; with ``cells = 1``
    the grid degenerates to a single well-mixed patch.
    """

    dimension: int
    extent: tuple
    cells: tuple

    def __post_init__(self):
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        if self.dimension not in (1, 2):
            raise ConfigError(f"grid dimension must be 1 or 2, got {self.dimension}")
        if len(extent) != self.dimension or len(cells) != self.dimension:
            raise ConfigError("extent and cells need one entry per axis")
        if any(not np.isfinite(e) or e <= 0 for e in extent):
            raise ConfigError(f"grid extent must be positive, got {extent}")
        if any(c < 1 for c in cells):
            raise ConfigError(f"grid needs at least one cell per axis, got {cells}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def line(cls, cells: int, extent: float = 1.0) -> "DomainGrid":
        return cls(1, (extent,), (cells,))

    @classmethod
    def rectangle(cls, cells: Sequence[int], extent: Sequence[float] = (1.0, 1.0)) -> "DomainGrid":
        return cls(2, tuple(extent), tuple(cells))

    @property
    def spacing(self) -> tuple:
        return tuple(e / c for e, c in zip(self.extent, self.cells))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.cells))

    def coordinates(self) -> np.ndarray:
        """Cell-centre coordinates, shape ``(n_nodes, dimension)``; x varies fastest."""
        axes = [(np.arange(c) + 0.5) * h for c, h in zip(self.cells, self.spacing)]
        if self.dimension == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "extent": list(self.extent), "cells": list(self.cells)}

    @classmethod
    def from_dict(cls, data: dict) -> "DomainGrid":
        return cls(int(data["dimension"]), tuple(data["extent"]), tuple(data["cells"]))


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Full problem definition ``-d_i Lap u_i = sum_j a_ij(x) u_j - b_i(u)``.

    Parameters
    ----------
    d : array_like, shape (n,)
        Diffusion coefficients.
    coupling : array_like, shape (n, n) or (n_nodes, n, n)
        Matrix ``A``; a 3-d array gives one matrix per grid node.
    competition : array_like, shape (n, n)
        Lotka--Volterra matrix ``C``.
    nonlinearity_kind : {"lotka-volterra", "sampled"}
    b_func : callable, optional
        Vectorised ``b`` for the sampled kind; maps ``(n, m)`` to ``(n, m)``.
    """

    d: np.ndarray
    coupling: np.ndarray
    competition: np.ndarray
    nonlinearity_kind: str = "lotka-volterra"
    b_func: Optional[Callable] = None
    name: str = field(default="")

    def __post_init__(self):
        d = _frozen(np.atleast_1d(self.d))
        coupling = _frozen(self.coupling)
        competition = _frozen(self.competition)
        n = d.shape[0]
        if coupling.shape[-2:] != (n, n) or coupling.ndim not in (2, 3):
            raise ShapeMismatchError(f"coupling must be ({n},{n}) or (nodes,{n},{n}), got {coupling.shape}")
        if competition.shape != (n, n):
            raise ShapeMismatchError(f"competition must be ({n},{n}), got {competition.shape}")
        if self.nonlinearity_kind not in ("lotka-volterra", "sampled"):
            raise ConfigError(f"unknown nonlinearity kind {self.nonlinearity_kind!r}")
        if self.nonlinearity_kind == "sampled" and self.b_func is None:
            raise ConfigError("sampled nonlinearity needs b_func")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "competition", competition)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def is_constant(self) -> bool:
        return self.coupling.ndim == 2

    @property
    def nonlinearity(self) -> Nonlinearity:
        if self.nonlinearity_kind == "sampled":
            return SampledNonlinearity(self.b_func, self.n)
        return LotkaVolterra(self.competition)

    def coupling_at_nodes(self, grid: DomainGrid) -> np.ndarray:
        """``A`` sampled at every node, shape ``(n_nodes, n, n)``."""
        if self.is_constant:
            return np.broadcast_to(self.coupling, (grid.n_nodes, self.n, self.n))
        if self.coupling.shape[0] != grid.n_nodes:
            raise ShapeMismatchError(
                f"coupling has {self.coupling.shape[0]} nodes, grid has {grid.n_nodes}")
        return self.coupling

    def replace(self, **changes) -> "SystemSpec":
        kw = dict(d=self.d, coupling=self.coupling, competition=self.competition,
                  nonlinearity_kind=self.nonlinearity_kind, b_func=self.b_func, name=self.name)
        kw.update(changes)
        return SystemSpec(**kw)

    def shifted(self, mu: float) -> "SystemSpec":
        """Spec with ``A - mu I``; its principal eigenvalue moves by exactly ``+mu``."""
        return self.replace(coupling=self.coupling - mu * np.eye(self.n))

    def swapped(self, perm: Sequence[int]) -> "SystemSpec":
        """Relabel species by ``perm``."""
        p = np.asarray(perm)
        A = self.coupling[..., p, :][..., :, p]
        return self.replace(d=self.d[p], coupling=A, competition=self.competition[np.ix_(p, p)])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d.tolist(),
            "A": self.coupling.tolist(),
            "C": self.competition.tolist(),
            "nonlinearity": self.nonlinearity_kind,
        }


@dataclass(frozen=True, eq=False)
class StateField:
    """Per-node, per-species values; ``values`` is flat and species-major."""

    grid: DomainGrid
    n: int
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(np.ravel(self.values))
        if vals.shape[0] != self.n * self.grid.n_nodes:
            raise ShapeMismatchError(
                f"expected {self.n}x{self.grid.n_nodes} values, got {vals.shape[0]}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: DomainGrid, vector: Sequence[float]) -> "StateField":
        vec = np.asarray(vector, dtype=float)
        return cls(grid, vec.shape[0], np.repeat(vec, grid.n_nodes))

    @classmethod
    def from_array(cls, grid: DomainGrid, arr: np.ndarray) -> "StateField":
        arr = np.asarray(arr, dtype=float)
        return cls(grid, arr.shape[0], arr.ravel())

    def as_array(self) -> np.ndarray:
        """Read-only ``(n, n_nodes)`` view."""
        return self.values.reshape(self.n, self.grid.n_nodes)

    def is_positive(self, threshold: float = 0.0) -> bool:
        return bool(np.all(self.values > threshold))

    def node_values(self, node: int = 0) -> np.ndarray:
        return self.as_array()[:, node].copy()

    def distance(self, other: "StateField") -> float:
        _check_same_shape(self, other)
        return float(np.max(np.abs(self.values - other.values)))

    def to_csv(self, path) -> None:
        """Write ``# node,x[,y],u1,...,un`` rows plus a JSON header next to it."""
        path = Path(path)
        coords = self.grid.coordinates()
        axes = ["x", "y"][: self.grid.dimension]
        cols = ["node", *axes, *[f"u{i + 1}" for i in range(self.n)]]
        arr = self.as_array()
        lines = ["# " + ",".join(cols)]
        for k in range(self.grid.n_nodes):
            row = [str(k)] + [f"{c:.17g}" for c in coords[k]] + [f"{v:.17g}" for v in arr[:, k]]
            lines.append(",".join(row))
        path.write_text("\n".join(lines) + "\n")
        header = {"grid": self.grid.to_dict(), "n": self.n, "layout": "species-major"}
        path.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path, grid: Optional[DomainGrid] = None) -> "StateField":
        path = Path(path)
        meta = path.with_suffix(".json")
        if grid is None:
            if not meta.exists():
                raise ConfigError(f"no grid given and no header {meta}")
            grid = DomainGrid.from_dict(json.loads(meta.read_text())["grid"])
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        u = data[:, 1 + grid.dimension:]
        order = np.argsort(data[:, 0])
        return cls.from_array(grid, u[order].T)


class OrderRelation(enum.Enum):
    LESS_EQ = "LessEq"
    GREATER_EQ = "GreaterEq"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"

    def transpose(self) -> "OrderRelation":
        return {OrderRelation.LESS_EQ: OrderRelation.GREATER_EQ,
                OrderRelation.GREATER_EQ: OrderRelation.LESS_EQ}.get(self, self)


@dataclass(frozen=True)
class Violation:
    """One broken structural hypothesis. ``label`` uses 1-based indices."""

    kind: str
    index: tuple
    value: float
    node: Optional[int] = None

    @property
    def label(self) -> str:
        idx = ",".join(str(i + 1) for i in self.index)
        sym = {"diffusion": "d", "essential-positivity": "a", "competition": "c"}[self.kind]
        where = f" at node {self.node}" if self.node is not None else ""
        return f"{sym}[{idx}] = {self.value:g}{where}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "index": list(self.index), "value": self.value,
                "node": self.node, "label": self.label}


def validate_spec(spec: SystemSpec, grid: DomainGrid) -> list:
    """Structural hypotheses as data: an empty list means the spec is admissible."""
    out = []
    for i, di in enumerate(spec.d):
        if not di > 0:
            out.append(Violation("diffusion", (i,), float(di)))
    A = spec.coupling_at_nodes(grid)
    for i in range(spec.n):
        for j in range(spec.n):
            if i == j:
                continue
            bad = np.flatnonzero(~(A[:, i, j] > 0))
            if bad.size:
                k = int(bad[0])
                node = None if spec.is_constant else k
                out.append(Violation("essential-positivity", (i, j), float(A[k, i, j]), node))
    if spec.nonlinearity_kind == "lotka-volterra":
        for i, j in zip(*np.nonzero(~(spec.competition > 0))):
            out.append(Violation("competition", (int(i), int(j)), float(spec.competition[i, j])))
    return out


def _check_same_shape(u, v):
    if u.n != v.n or u.grid != v.grid:
        raise ShapeMismatchError("states live on different grids or species counts")


def _values(u):
    return u.values if isinstance(u, StateField) else np.ravel(np.asarray(u, dtype=float))


def compare_states(u, v, tol: float = DEFAULT_ORDER_TOL) -> OrderRelation:
    """Componentwise order of two states with slack ``tol`` in the max norm.

    Accepts :class:`StateField` objects or plain arrays of equal shape.
    """
    if isinstance(u, StateField) and isinstance(v, StateField):
        _check_same_shape(u, v)
    a, b = _values(u), _values(v)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    le = bool(np.all(a <= b + tol))
    ge = bool(np.all(a >= b - tol))
    if le and ge:
        return OrderRelation.EQUAL
    if le:
        return OrderRelation.LESS_EQ
    if ge:
        return OrderRelation.GREATER_EQ
    return OrderRelation.INCOMPARABLE
