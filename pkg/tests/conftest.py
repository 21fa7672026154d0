from __future__ import annotations

import itertools
from typing import TYPE_CHECKING
from typing import Callable
from typing import NamedTuple

import numpy as np
import pytest

from ddminlp.dd import PartitionScheme
from ddminlp.dd import enumerate_solutions
from ddminlp.dd import make_partitions
from ddminlp.interval import Interval
from ddminlp.parser import parse
from ddminlp.separation import flow_polytope

if TYPE_CHECKING:
    from pathlib import Path

    from ddminlp.dd import DecisionDiagram
    from ddminlp.model import Model


class Inequality(NamedTuple):
    coefficients: tuple[float, ...]
    rhs: float


SEPARABLE = """\
# tanh(x1) + x2 e^-x2 + ||x3||_0 <= 1 over [0, 2]^3
var x1 in [0, 2];
var x2 in [0, 2];
var x3 in [0, 2];
con tanh(x1) + x2 * exp(-x2) + l0(x3) <= 1;
"""

NONSEPARABLE = """\
var x1 in [0, 2] integer;
var x2 in [0, 1] integer;
var x3 in [0, 1];
max x1 + x2 + x3;
con -x1^2 + x2 - x1 * x3 <= -1;
"""

INFEASIBLE = """\
var x1 in [0, 2];
max x1;
con x1 <= -1;
"""

# hull descriptions of the diagrams built from the instances above
SEPARABLE_HULL = (
    Inequality((1, 1, 1), 4),
    Inequality((1, 1, 0), 3),
    Inequality((1, 0, 1), 3),
    Inequality((0, 1, 1), 3),
)
SEPARABLE_MERGED_HULL = (Inequality((1, 0, 1), 3),)
NONSEPARABLE_HULL = (Inequality((-1, 1, 0), 0),)
NONSEPARABLE_MERGED_HULL: tuple[Inequality, ...] = ()


@pytest.fixture
def separable_model() -> Model:
    return parse(SEPARABLE, name='separable')


@pytest.fixture
def nonseparable_model() -> Model:
    return parse(NONSEPARABLE, name='nonseparable')


@pytest.fixture
def separable_partitions(separable_model: Model) -> PartitionScheme:
    return make_partitions(separable_model.box, 2)


@pytest.fixture
def nonseparable_partitions(nonseparable_model: Model) -> PartitionScheme:
    scheme = make_partitions(nonseparable_model.box, 3, (0, 1))
    scheme[2] = (Interval(0.0, 1.0),)
    return scheme


@pytest.fixture
def instance_files(tmp_path: Path) -> dict[str, Path]:
    files = {}
    for name, text in (
        ('separable', SEPARABLE),
        ('nonseparable', NONSEPARABLE),
        ('infeasible', INFEASIBLE),
    ):
        f = tmp_path / f'{name}.mod'
        f.write_text(text)
        files[name] = f
    return files


def lattice(lower: tuple[float, ...], upper: tuple[float, ...]) -> list[tuple[float, ...]]:
    axes = [range(int(lo), int(hi) + 1) for lo, hi in zip(lower, upper)]
    return [tuple(float(v) for v in p) for p in itertools.product(*axes)]


def satisfies(point: tuple[float, ...], hull: tuple[Inequality, ...], tol: float = 1e-9) -> bool:
    return all(np.dot(h.coefficients, point) <= h.rhs + tol for h in hull)


@pytest.fixture
def assert_hull() -> Callable[[DecisionDiagram, tuple[Inequality, ...]], None]:
    """
    Checks that the diagram's solution hull is the box cut by `hull`: every
    encoded point satisfies it and every lattice point satisfying it lies
    in the flow polytope. The hulls used here have integral vertices.
    """

    def check(d: DecisionDiagram, hull: tuple[Inequality, ...]) -> None:
        points = enumerate_solutions(d)
        assert points
        for p in points:
            assert satisfies(p, hull), p
        lower = tuple(min(p[k] for p in points) for k in range(len(d.variables)))
        upper = tuple(max(p[k] for p in points) for k in range(len(d.variables)))
        polytope = flow_polytope(d)
        for p in lattice(lower, upper):
            assert polytope.contains(p) == satisfies(p, hull), p

    return check
