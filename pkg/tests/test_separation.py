from __future__ import annotations

import numpy as np
import pytest

from ddminlp.dd import DecisionDiagram
from ddminlp.dd import MergePolicy
from ddminlp.dd import PartitionScheme
from ddminlp.dd import build
from ddminlp.dd import enumerate_solutions
from ddminlp.dd import make_partitions
from ddminlp.model import Model
from ddminlp.parser import parse
from ddminlp.separation import CutPlane
from ddminlp.separation import CutPool
from ddminlp.separation import SeparationError
from ddminlp.separation import flow_polytope
from ddminlp.separation import longest_path
from ddminlp.separation import separate_exact
from ddminlp.separation import separate_subgradient
from tests.conftest import SEPARABLE_HULL
from tests.conftest import satisfies


@pytest.fixture
def separable_dd(separable_model: Model, separable_partitions: PartitionScheme) -> DecisionDiagram:
    return build(separable_model.constraints[0], separable_partitions, dimension=3)


@pytest.fixture
def nonseparable_dd(
    nonseparable_model: Model, nonseparable_partitions: PartitionScheme
) -> DecisionDiagram:
    c = nonseparable_model.constraints[0]
    return build(c, nonseparable_partitions, integer=(True, True, False), dimension=3)


def test_longest_path_all_ones(separable_dd: DecisionDiagram):
    labels, value = longest_path(separable_dd, np.ones(3))
    assert value == pytest.approx(4.0)
    assert labels.sum() == pytest.approx(4.0)
    assert tuple(labels) in enumerate_solutions(separable_dd)


def test_longest_path_ties_prefer_small_labels(separable_dd: DecisionDiagram):
    labels, value = longest_path(separable_dd, np.zeros(3))
    assert value == 0.0
    assert tuple(labels) == (0.0, 0.0, 0.0)


def test_longest_path_matches_enumeration(nonseparable_dd: DecisionDiagram):
    rng = np.random.default_rng(3)
    points = np.array(enumerate_solutions(nonseparable_dd))
    for _ in range(20):
        gamma = rng.uniform(-1, 1, size=3)
        _, value = longest_path(nonseparable_dd, gamma)
        assert value == pytest.approx(float((points @ gamma).max()))


def test_flow_polytope_contains_solutions(separable_dd: DecisionDiagram):
    polytope = flow_polytope(separable_dd)
    assert polytope.balance.shape == (separable_dd.node_count, separable_dd.arc_count)
    for p in enumerate_solutions(separable_dd):
        assert polytope.contains(p)
    assert polytope.contains((0.5, 0.5, 0.5))
    assert not polytope.contains((2.0, 2.0, 2.0))


def test_separate_exact_cuts_infeasible_point(nonseparable_dd: DecisionDiagram):
    cut = separate_exact(nonseparable_dd, (0.0, 1.0, 0.0))
    assert cut is not None
    assert cut.source == 'exact'
    assert cut.violation == pytest.approx(1.0, abs=1e-6)
    assert cut.coefficients[0] == pytest.approx(-1.0, abs=1e-6)
    assert cut.coefficients[1] == pytest.approx(1.0, abs=1e-6)
    assert cut.coefficients[2] <= 1e-9  # noqa: PLR2004
    assert cut.rhs == pytest.approx(0.0, abs=1e-6)
    # valid for every point the diagram encodes
    for p in enumerate_solutions(nonseparable_dd):
        assert not cut.violated_by(p, tol=1e-6)


def test_separate_exact_inside_hull(separable_dd: DecisionDiagram):
    assert separate_exact(separable_dd, (1.0, 1.0, 1.0)) is None
    assert separate_exact(separable_dd, (0.0, 2.0, 0.0)) is None


def test_separate_exact_separable(separable_dd: DecisionDiagram):
    cut = separate_exact(separable_dd, (2.0, 2.0, 2.0))
    assert cut is not None
    assert cut.violated_by((2.0, 2.0, 2.0))
    for p in enumerate_solutions(separable_dd):
        assert not cut.violated_by(p, tol=1e-6)


def test_separate_subgradient_first_cut(nonseparable_dd: DecisionDiagram):
    # gamma = 0, then (0, 1, 0), then (-1, 1, 0) / sqrt(2) separates
    cut = separate_subgradient(nonseparable_dd, (0.0, 1.0, 0.0), iters=3)
    assert cut is not None
    assert cut.source == 'subgradient'
    assert cut.coefficients == pytest.approx([-2**-0.5, 2**-0.5, 0.0], abs=1e-9)
    assert cut.rhs == pytest.approx(0.0, abs=1e-9)
    assert cut.violation == pytest.approx(2**-0.5)


def test_separate_subgradient_refines_after_ascent(nonseparable_dd: DecisionDiagram):
    # two ascent steps find nothing; the nearest hull point (0.5, 0.5, 0) gives the cut
    cut = separate_subgradient(nonseparable_dd, (0.0, 1.0, 0.0), iters=2)
    assert cut is not None
    assert cut.source == 'min-norm'
    assert cut.coefficients == pytest.approx([-2**-0.5, 2**-0.5, 0.0], abs=1e-9)
    assert cut.rhs == pytest.approx(0.0, abs=1e-9)
    assert cut.violation == pytest.approx(2**-0.5)
    assert float(np.linalg.norm(cut.coefficients)) <= 1.0 + 1e-9  # noqa: PLR2004


def test_separate_subgradient_valid(nonseparable_dd: DecisionDiagram):
    cut = separate_subgradient(nonseparable_dd, (0.0, 1.0, 0.0))
    assert cut is not None
    assert cut.violated_by((0.0, 1.0, 0.0))
    for p in enumerate_solutions(nonseparable_dd):
        assert not cut.violated_by(p, tol=1e-6)


def test_separate_subgradient_inside_hull(separable_dd: DecisionDiagram):
    assert separate_subgradient(separable_dd, (1.0, 1.0, 1.0)) is None


def test_separation_on_restricted_support():
    m = parse('var a in [0, 5];\nvar x in [0, 2];\ncon tanh(x) <= 0.5;\n')
    d = build(m.constraints[0], make_partitions(m.box, 2), dimension=2)
    assert d.variables == (1,)
    cut = separate_exact(d, (4.0, 2.0))
    assert cut is not None
    assert cut.coefficients.size == 2  # noqa: PLR2004
    assert cut.coefficients[0] == 0.0
    assert cut.rhs == pytest.approx(cut.coefficients[1])


def test_empty_diagram_raises():
    m = parse('var x1 in [0, 2];\ncon tanh(x1) <= -1;\n')
    d = build(m.constraints[0], make_partitions(m.box, 2))
    with pytest.raises(SeparationError):
        flow_polytope(d)
    with pytest.raises(SeparationError):
        separate_exact(d, (0.0,))
    with pytest.raises(SeparationError):
        separate_subgradient(d, (0.0,))


def test_vector_size_mismatch(separable_dd: DecisionDiagram):
    with pytest.raises(SeparationError, match='fits neither'):
        longest_path(separable_dd, np.ones(4))


def test_cut_pool_deduplicates():
    pool = CutPool()
    assert pool.add(CutPlane(np.array([1.0, 1.0]), 2.0))
    assert not pool.add(CutPlane(np.array([2.0, 2.0]), 4.0))
    assert pool.add(CutPlane(np.array([1.0, 1.0]), 1.0))
    assert len(pool) == 1
    assert pool.cuts[0].rhs == 1.0
    assert pool.extend([CutPlane(np.array([1.0, 0.0]), 1.0)]) == 1
    rows, rhs = pool.rows(2)
    assert rows.shape == (2, 2)
    assert rhs.tolist() == [1.0, 1.0]


def test_cut_pool_copy_is_independent():
    pool = CutPool([CutPlane(np.array([1.0]), 1.0)])
    other = pool.copy()
    other.add(CutPlane(np.array([-1.0]), 0.0))
    assert len(pool) == 1
    assert len(other) == 2  # noqa: PLR2004


def test_empty_pool_rows():
    rows, rhs = CutPool().rows(3)
    assert rows.shape == (0, 3)
    assert rhs.size == 0


@pytest.fixture(params=('separable', 'separable_merged', 'nonseparable', 'nonseparable_merged'))
def example_dd(
    request: pytest.FixtureRequest,
    separable_model: Model,
    separable_partitions: PartitionScheme,
    nonseparable_model: Model,
    nonseparable_partitions: PartitionScheme,
) -> DecisionDiagram:
    merged = request.param.endswith('_merged')
    width = 2 if merged else None
    if request.param.startswith('separable'):
        c = separable_model.constraints[0]
        return build(c, separable_partitions, width, MergePolicy.G, dimension=3)
    c = nonseparable_model.constraints[0]
    return build(
        c, nonseparable_partitions, width, MergePolicy.G, integer=(True, True, False), dimension=3
    )


def test_subgradient_never_contradicts_exact(example_dd: DecisionDiagram):
    points = np.array(enumerate_solutions(example_dd))
    lo, hi = points.min(axis=0), points.max(axis=0)
    polytope = flow_polytope(example_dd)
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = rng.uniform(lo - 0.25, hi + 0.25)
        exact = separate_exact(example_dd, x)
        cut = separate_subgradient(example_dd, x)
        if cut is not None:
            assert exact is not None, x
            assert float(np.linalg.norm(cut.coefficients)) <= 1.0 + 1e-9  # noqa: PLR2004
            assert np.all(points @ cut.coefficients <= cut.rhs + 1e-8), x
        assert polytope.contains(x) == (exact is None), x


def test_subgradient_finds_cuts_outside_example_hull(separable_dd: DecisionDiagram):
    rng = np.random.default_rng(3)
    exterior: list[tuple[float, ...]] = []
    while len(exterior) < 100:  # noqa: PLR2004
        x = tuple(float(v) for v in rng.uniform(0.0, 2.0, size=3))
        if not satisfies(x, SEPARABLE_HULL):
            exterior.append(x)
    found = sum(separate_subgradient(separable_dd, x) is not None for x in exterior)
    assert found >= 95  # noqa: PLR2004


def test_separators_agree_with_golden_hull(separable_dd: DecisionDiagram):
    rng = np.random.default_rng(5)
    for _ in range(100):
        x = tuple(float(v) for v in rng.uniform(0.0, 2.0, size=3))
        outside = not satisfies(x, SEPARABLE_HULL, tol=0.0)
        assert (separate_exact(separable_dd, x) is not None) == outside, x
