"""Shipped scenarios and the flat key-value scenario file format.

A scenario file is a TOML subset::

    name = "my-case"
    n = 2
    d = [1.0, 1.0]
    A = [[0.8, 0.2], [0.2, 0.8]]
    C = [[0.1, 0.9], [0.9, 0.1]]

    [grid]
    dimension = 1
    extent = [1.0]
    cells = [16]
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .model import DomainGrid, SystemSpec

COUNTEREXAMPLE = "hei2004-counterexample"

_ROOT = math.sqrt(15.0 / 2.0)

#: the three constant coexistence states listed for the counter-example system
COUNTEREXAMPLE_STATES = (
    (1.0, 1.0),
    (3.0 - _ROOT, 3.0 + _ROOT),
    (3.0 + _ROOT, 3.0 - _ROOT),
)


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: SystemSpec
    grid: DomainGrid
    provenance: str

    def with_grid(self, cells=None, extent=None) -> "Scenario":
        if cells is None and extent is None:
            return self
        dim = self.grid.dimension
        cells = self.grid.cells if cells is None else tuple(np.broadcast_to(cells, (dim,)))
        extent = self.grid.extent if extent is None else tuple(np.broadcast_to(extent, (dim,)))
        return Scenario(self.name, self.spec, DomainGrid(dim, extent, cells), self.provenance)

    def to_dict(self) -> dict:
        return {"name": self.name, "spec": self.spec.to_dict(), "grid": self.grid.to_dict(),
                "provenance": self.provenance}


def counterexample_spec() -> SystemSpec:
    """``-Lap u1 = (4/5) u1 + (1/5) u2 - u1 (u1 + 9 u2) / 10`` and its mirror."""
    A = [[1 - 1 / 5, 1 / 5], [1 / 5, 1 - 1 / 5]]
    C = [[1 / 10, 9 / 10], [9 / 10, 1 / 10]]
    return SystemSpec([1.0, 1.0], A, C, name=COUNTEREXAMPLE)


def _line(cells=16):
    return DomainGrid.line(cells, 1.0)


def _builtin():
    base = counterexample_spec()
    return {
        COUNTEREXAMPLE: Scenario(
            COUNTEREXAMPLE, base, _line(),
            "two-species mutation-competition system with three constant coexistence states"),
        "hei2004-extinct": Scenario(
            "hei2004-extinct", base.shifted(1.5).replace(name="hei2004-extinct"), _line(),
            "counter-example with A - 1.5 I: principal eigenvalue +0.5, only the trivial state"),
        "cooperative-regime": Scenario(
            "cooperative-regime",
            SystemSpec([1.0, 1.0], [[0.8, 0.2], [0.2, 0.8]], [[1.0, 0.1], [0.1, 1.0]],
                       name="cooperative-regime"),
            _line(),
            "weak inter-specific competition: cooperative on a box containing all states"),
        "scalar-logistic": Scenario(
            "scalar-logistic",
            SystemSpec([1.0], [[1.0]], [[0.1]], name="scalar-logistic"),
            _line(),
            "single species u = a/c = 10"),
    }


BUILTIN = _builtin()


def builtin_names():
    return sorted(BUILTIN)


def load_scenario_file(path) -> Scenario:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    try:
        n = int(data["n"])
        d = data["d"]
        A = data["A"]
        C = data["C"]
        g = data["grid"]
        grid = DomainGrid(int(g["dimension"]), tuple(g["extent"]), tuple(g["cells"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"scenario {path} is missing or has a malformed key: {exc}") from exc
    spec = SystemSpec(d, A, C, name=data.get("name", path.stem))
    if spec.n != n:
        raise ConfigError(f"scenario {path}: n = {n} but d has {spec.n} entries")
    return Scenario(data.get("name", path.stem), spec, grid, f"file:{path}")


def load_scenario(name_or_path) -> Scenario:
    """Resolve a shipped scenario name or a scenario file path."""
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]
    path = Path(name_or_path)
    if path.exists():
        return load_scenario_file(path)
    raise ConfigError(f"unknown scenario {name_or_path!r}; shipped: {', '.join(builtin_names())}")


def dump_scenario(scenario: Scenario) -> str:
    """Render a constant-coefficient scenario in the file format."""
    spec = scenario.spec
    if not spec.is_constant:
        raise ConfigError("only constant coupling can be written to a scenario file")

    def arr(a):
        return "[" + ", ".join(arr(x) if isinstance(x, list) else repr(float(x)) for x in a) + "]"

    g = scenario.grid
    return "\n".join([
        f'name = "{scenario.name}"',
        f"n = {spec.n}",
        f"d = {arr(spec.d.tolist())}",
        f"A = {arr(spec.coupling.tolist())}",
        f"C = {arr(spec.competition.tolist())}",
        "",
        "[grid]",
        f"dimension = {g.dimension}",
        f"extent = {arr(list(g.extent))}",
        f"cells = [{', '.join(str(c) for c in g.cells)}]",
        "",
    ])
