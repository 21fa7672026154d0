from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
import pytest

from ddminlp.expr import Direction
from ddminlp.expr import Term
from ddminlp.expr import analyze_monotonicity
from ddminlp.expr import constant_offset
from ddminlp.expr import decompose
from ddminlp.expr import evaluate
from ddminlp.expr import linear_form
from ddminlp.expr import reindex
from ddminlp.interval import Interval
from ddminlp.interval import unary_interval
from ddminlp.nodes import Binary
from ddminlp.nodes import Const
from ddminlp.nodes import DomainError
from ddminlp.nodes import ExpressionError
from ddminlp.nodes import Expression
from ddminlp.nodes import Unary
from ddminlp.nodes import Var
from ddminlp.nodes import binary_value
from ddminlp.nodes import unary_value
from ddminlp.parser import Parser

INC = Direction.NONDECREASING
DEC = Direction.NONINCREASING
UNK = Direction.UNKNOWN

NAMES = ('x1', 'x2', 'x3')


def expr(text: str) -> Expression:
    """Parses an expression over x1, x2, x3 (positions 0, 1, 2)."""
    declarations = ''.join(f'var {n} in [0, 1];\n' for n in NAMES)
    p = Parser(declarations + f'con {text} <= 0;')
    while p.current.text != 'con':
        p.statement()
    p.advance()
    return p.expression()


class Case(NamedTuple):
    name: str
    text: str
    point: tuple[float, ...]
    expected: float


@pytest.mark.parametrize(
    ('name', 'text', 'point', 'expected'),
    (
        Case(name='tanh_at_zero', text='tanh(x1)', point=(0, 0, 0), expected=0.0),
        Case(
            name='x_exp_minus_x',
            text='x2 * exp(-x2)',
            point=(0, 2, 0),
            expected=2 * math.exp(-2),
        ),
        Case(name='l0_at_zero', text='l0(x3)', point=(0, 0, 0), expected=0.0),
        Case(name='l0_nonzero', text='l0(x3)', point=(0, 0, 0.3), expected=1.0),
        Case(name='power_right_assoc', text='2^x1^2', point=(3, 0, 0), expected=512.0),
        Case(name='unary_minus_power', text='-x1^2', point=(3, 0, 0), expected=-9.0),
        Case(name='mod_negative', text='mod(x1, 3)', point=(-1, 0, 0), expected=2.0),
        Case(name='centropy_zero', text='centropy(x1, x2)', point=(0, 2, 0), expected=0.0),
        Case(name='constants', text='pi * x1 + e', point=(1, 0, 0), expected=math.pi + math.e),
        Case(name='erf', text='erf(x1)', point=(0.5, 0, 0), expected=math.erf(0.5)),
    ),
)
def test_evaluate(name: str, text: str, point: tuple[float, ...], expected: float) -> None:
    assert evaluate(expr(text), point) == pytest.approx(expected, abs=1e-12)


def test_evaluate_example_value() -> None:
    assert evaluate(expr('x2 * exp(-x2)'), {1: 2.0}) == pytest.approx(0.2707, abs=1e-4)


@pytest.mark.parametrize(
    ('text', 'point'),
    (
        ('log(x1)', (-1.0, 0, 0)),
        ('sqrt(x1)', (-0.5, 0, 0)),
        ('x2 / x1', (0, 1, 0)),
        ('gamma(x1)', (-2.0, 0, 0)),
        ('x1 ^ 0.5', (-4.0, 0, 0)),
        ('sin(exp(x1))', (800.0, 0, 0)),
        ('cos(exp(x1))', (800.0, 0, 0)),
        ('exp(x1) - exp(x2)', (800.0, 800.0, 0)),
    ),
)
def test_evaluate_domain_errors(text: str, point: tuple[float, ...]) -> None:
    with pytest.raises(DomainError):
        evaluate(expr(text), point)


def test_operator_values_at_infinity() -> None:
    with pytest.raises(DomainError, match='sin undefined'):
        unary_value('sin', math.inf)
    with pytest.raises(DomainError, match='sub undefined'):
        binary_value('sub', math.inf, math.inf)
    assert unary_value('exp', 800.0) == math.inf
    assert unary_interval('sin', Interval(math.inf, math.inf)) == Interval(-1.0, 1.0)
    assert unary_interval('cos', Interval(1.0, math.inf)) == Interval(-1.0, 1.0)


@pytest.mark.parametrize(
    ('text', 'supports'),
    (
        ('tanh(x1) + x2 * exp(-x2) + l0(x3)', [(0,), (1,), (2,)]),
        ('-x1^2 + x2 - x1 * x3', [(0,), (1,), (0, 2)]),
        ('x1 + sin(x1) + x2', [(0,), (1,)]),
        ('3 * (x1 + x2 * x3)', [(0,), (1, 2)]),
    ),
)
def test_decompose_supports(text: str, supports: list[tuple[int, ...]]) -> None:
    assert [t.variables for t in decompose(expr(text))] == supports


def test_decompose_last_variable() -> None:
    terms = decompose(expr('-x1^2 + x2 - x1 * x3'))
    assert [t.hmax for t in terms] == [0, 1, 2]
    assert [t.hmin for t in terms] == [0, 1, 0]


def test_decompose_preserves_value() -> None:
    e = expr('2 * tanh(x1) - (x2 - 3) / 4 + x1 * x3 + 5')
    point = (0.3, 0.7, 0.2)
    total = sum(t.evaluate(point) for t in decompose(e)) + constant_offset(e)
    assert total == pytest.approx(evaluate(e, point))


def test_decompose_constant_folds_into_offset() -> None:
    e = Const(5.0)
    assert decompose(e) == []
    assert constant_offset(e) == 5.0  # noqa: PLR2004


def test_term_rejects_constant() -> None:
    with pytest.raises(ExpressionError, match='without variables'):
        Term(Const(5.0))


@pytest.mark.parametrize(
    ('text', 'expected'),
    (
        ('2 * x1 - x2 / 4 + 1', ({0: 2.0, 1: -0.25}, 1.0)),
        ('-(x1 - x3)', ({0: -1.0, 2: 1.0}, 0.0)),
        ('x1 * x2', None),
        ('tanh(x1)', None),
    ),
)
def test_linear_form(text: str, expected: tuple[dict[int, float], float] | None) -> None:
    assert linear_form(expr(text)) == expected


class ReindexCase(NamedTuple):
    name: str
    text: str
    mapping: tuple[int, ...]


@pytest.mark.parametrize(
    ('name', 'text', 'mapping'),
    (
        ReindexCase(
            name='two_occurrences',
            text='x2^4 * exp(-x2) / (arctan(x1) + 1)',
            mapping=(1, 1, 0),
        ),
        ReindexCase(name='single_occurrence', text='tanh(x1)', mapping=(0,)),
        ReindexCase(name='bilinear', text='x1 * x3', mapping=(0, 2)),
    ),
)
def test_reindex_mapping(name: str, text: str, mapping: tuple[int, ...]) -> None:
    t = Term(expr(text))
    rt = reindex(t)
    assert rt.mapping == mapping
    assert rt.directions is None
    point = (0.4, 1.3, 0.9)
    fresh = [point[i] for i in rt.mapping]
    assert evaluate(rt.expr, fresh) == pytest.approx(t.evaluate(point))


def test_reindex_certifies_directions() -> None:
    box = [Interval(0, 2), Interval(0, 2)]
    rt = reindex(Term(expr('x2^4 * exp(-x2) / (arctan(x1) + 1)')), box)
    assert rt.directions == (INC, DEC, DEC)
    assert rt.certified


class MonotoneCase(NamedTuple):
    name: str
    text: str
    box: tuple[tuple[float, float], ...]
    expected: dict[int, Direction]


@pytest.mark.parametrize(
    ('name', 'text', 'box', 'expected'),
    (
        MonotoneCase(name='tanh', text='tanh(x1)', box=((0, 2),), expected={0: INC}),
        MonotoneCase(
            name='negative_bilinear',
            text='-x1 * x3',
            box=((0, 1), (0, 1), (0, 1)),
            expected={0: DEC, 2: DEC},
        ),
        MonotoneCase(
            name='x_exp_minus_x',
            text='x1 * exp(-x1)',
            box=((0, 2),),
            expected={0: UNK},
        ),
        MonotoneCase(name='square_positive', text='x1^2', box=((1, 2),), expected={0: INC}),
        MonotoneCase(name='square_negative', text='x1^2', box=((-2, -1),), expected={0: DEC}),
        MonotoneCase(name='square_mixed', text='x1^2', box=((-1, 2),), expected={0: UNK}),
        MonotoneCase(name='sin_rising', text='sin(x1)', box=((0, 1),), expected={0: INC}),
        MonotoneCase(name='cos_falling', text='cos(x1)', box=((0, 3),), expected={0: DEC}),
        MonotoneCase(name='sin_full', text='sin(x1)', box=((0, 6.3),), expected={0: UNK}),
        MonotoneCase(
            name='sin_overflowing_argument',
            text='sin(exp(x1))',
            box=((600, 800),),
            expected={0: UNK},
        ),
        MonotoneCase(name='gamma_right', text='gamma(x1)', box=((2, 3),), expected={0: INC}),
        MonotoneCase(name='gamma_left', text='gamma(x1)', box=((0.2, 1),), expected={0: DEC}),
        MonotoneCase(name='log_domain', text='log(x1)', box=((-1, 1),), expected={0: UNK}),
        MonotoneCase(
            name='fraction',
            text='x1 / (x2 + 1)',
            box=((0, 1), (0, 1)),
            expected={0: INC, 1: DEC},
        ),
    ),
)
def test_analyze_monotonicity(
    name: str, text: str, box: tuple[tuple[float, float], ...], expected: dict[int, Direction]
) -> None:
    domains = {i: Interval(lo, hi) for i, (lo, hi) in enumerate(box)}
    assert analyze_monotonicity(expr(text), domains) == expected


def test_direction_flip() -> None:
    assert INC.flip() is DEC
    assert DEC.flip() is INC
    assert UNK.flip() is UNK


def test_folded_constants_keep_structure() -> None:
    e = expr('x1 * (2 + 3)')
    assert e == Binary('mul', Var(0), Const(5.0))
    assert expr('-(1)') == Const(-1.0)
    assert expr('tanh(x1)') == Unary('tanh', Var(0))


SAMPLED = (
    'tanh(x1) + x2 * exp(-x2) + l0(x3)',
    '-x1^2 + x2 - x1 * x3',
    '2 * tanh(x1) - (x2 - 3) / 4 + x1 * x3 + 5',
    'x2^4 * exp(-x2) / (arctan(x1) + 1)',
    'sqrt(x1) * log(x2 + 1) - gamma(x3 + 1)',
    'mod(x1, 0.7) + floor(2 * x2) - abs(x3 - 1)',
    'centropy(x1, x2) + erf(x3 - 1) * x1',
    '3 * (x1 + x2 * x3) - sin(x1 * x2)',
    'x1 / (x2 + 0.5) - cos(x3)',
    'exp(x1 - x2) + x3^3 - 2 * x3',
)

SAMPLE_BOX = (0.1, 2.0)


@pytest.mark.parametrize('text', SAMPLED)
def test_decompose_and_reindex_preserve_values(text: str) -> None:
    e = expr(text)
    terms = decompose(e)
    offset = constant_offset(e)
    reindexed = [(t, reindex(t)) for t in terms]
    rng = np.random.default_rng(len(text))
    for p in rng.uniform(*SAMPLE_BOX, size=(1000, 3)):
        point = tuple(float(v) for v in p)
        total = sum(t.evaluate(point) for t in terms) + offset
        assert total == pytest.approx(evaluate(e, point), rel=1e-9, abs=1e-9)
        for t, rt in reindexed:
            fresh = [point[i] for i in rt.mapping]
            assert evaluate(rt.expr, fresh) == pytest.approx(t.evaluate(point), abs=1e-12)


@pytest.mark.parametrize('text', SAMPLED)
def test_certified_directions_hold_on_samples(text: str) -> None:
    e = expr(text)
    domains = dict.fromkeys(range(3), Interval(*SAMPLE_BOX))
    certified = {v: d for v, d in analyze_monotonicity(e, domains).items() if d is not UNK}
    rng = np.random.default_rng(len(text) + 1)
    for v, direction in certified.items():
        for _ in range(200):
            point = list(rng.uniform(*SAMPLE_BOX, size=3))
            a, b = sorted(rng.uniform(*SAMPLE_BOX, size=2))
            point[v] = a
            fa = evaluate(e, point)
            point[v] = b
            fb = evaluate(e, point)
            slack = 1e-9 * (1 + abs(fa))
            if direction is INC:
                assert fa <= fb + slack
            else:
                assert fa >= fb - slack


def test_sampled_expressions_have_certified_directions() -> None:
    domains = dict.fromkeys(range(3), Interval(*SAMPLE_BOX))
    found = sum(
        d is not UNK
        for text in SAMPLED
        for d in analyze_monotonicity(expr(text), domains).values()
    )
    assert found >= 10  # noqa: PLR2004
