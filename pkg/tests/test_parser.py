from __future__ import annotations

from typing import NamedTuple

import pytest

from ddminlp.model import Box
from ddminlp.model import ModelError
from ddminlp.model import format_model
from ddminlp.parser import ParseError
from ddminlp.parser import parse
from ddminlp.parser import tokenize
from tests.conftest import NONSEPARABLE
from tests.conftest import SEPARABLE


def test_parse_separable():
    m = parse(SEPARABLE, name='separable')
    assert m.names == ('x1', 'x2', 'x3')
    assert m.objective == (0.0, 0.0, 0.0)
    assert not m.minimize
    assert len(m.constraints) == 1
    c = m.constraints[0]
    assert c.name == 'c1'
    assert c.rhs == 1.0
    assert c.separable
    assert [t.variables for t in c.terms] == [(0,), (1,), (2,)]


def test_parse_nonseparable():
    m = parse(NONSEPARABLE)
    assert [v.integer for v in m.variables] == [True, True, False]
    assert m.objective == (1.0, 1.0, 1.0)
    c = m.constraints[0]
    assert c.rhs == -1.0
    assert not c.separable
    assert c.variables == (0, 1, 2)
    assert c.value((1, 0, 1)) == -2.0  # noqa: PLR2004


def test_parse_equality_splits():
    m = parse('var x in [0, 2];\nvar y in [0, 2];\ncon x + y == 1;\n')
    assert [c.name for c in m.constraints] == ['c1', 'c1:ge']
    le, ge = m.constraints
    assert le.rhs == 1.0
    assert ge.rhs == -1.0
    assert le.linear() == {0: 1.0, 1: 1.0}
    assert ge.linear() == {0: -1.0, 1: -1.0}


def test_parse_greater_equal_negates():
    m = parse('var x in [0, 2];\ncon tanh(x) >= 0.5;\n')
    c = m.constraints[0]
    assert c.name == 'c1'
    assert c.rhs == -0.5
    assert c.value((1.0,)) < 0


def test_parse_min_linear_objective():
    m = parse('var x in [0, 2];\nvar y in [0, 2];\nmin 2 * x - y + 3;\n')
    assert m.minimize
    assert m.objective == (-2.0, 1.0)
    assert m.offset == -3.0
    assert m.report_value(m.objective_value((1.0, 0.0))) == 5.0  # noqa: PLR2004
    assert m.epigraph is None


def test_parse_nonlinear_objective_epigraph():
    m = parse('var x in [-1, 2];\nvar y in [0, 1];\nmin x^2 + y;\n')
    assert m.epigraph is not None
    assert m.epigraph.index == 2  # noqa: PLR2004
    assert m.names == ('x', 'y', '_obj')
    z = m.variables[2]
    assert (z.lower, z.upper) == (-5.0, 0.0)
    assert m.objective == (0.0, 0.0, 1.0)
    assert [c.name for c in m.constraints] == ['obj', 'obj:ge']
    # z = -(x^2 + y) satisfies both sides with equality
    point = (1.0, 0.5, -1.5)
    assert all(c.violation(point) == pytest.approx(0.0) for c in m.constraints)


def test_parse_primal_and_constants():
    m = parse('var x in [0, pi];\nmax x;\nprimal -3.5;\n')
    assert m.primal_bound == -3.5  # noqa: PLR2004
    assert m.variables[0].upper == pytest.approx(3.141592653589793)


def test_parse_constant_constraint_that_holds(caplog):
    m = parse('var x in [0, 1];\ncon 0 <= 1;\n')
    assert m.constraints == ()
    assert 'always holds' in caplog.text


def test_tokenize_positions():
    tokens = tokenize('var x1 in [0, 1]; # comment\n  con x1 <= 1;')
    con = next(t for t in tokens if t.text == 'con')
    assert (con.line, con.col) == (2, 3)
    assert tokens[-1].kind == 'eof'


class ErrorCase(NamedTuple):
    name: str
    text: str
    match: str
    line: int
    col: int


@pytest.mark.parametrize(
    ('name', 'text', 'match', 'line', 'col'),
    (
        ErrorCase(
            name='undeclared',
            text='var x1 in [0, 1];\ncon x1 <= y;',
            match='undeclared variable',
            line=2,
            col=11,
        ),
        ErrorCase(
            name='missing_bounds',
            text='var x1;',
            match='needs explicit bounds',
            line=1,
            col=7,
        ),
        ErrorCase(
            name='objective_twice',
            text='var x in [0, 1];\nmax x;\nmax x;',
            match='objective declared twice',
            line=3,
            col=1,
        ),
        ErrorCase(
            name='bad_character',
            text='var x in [0, 1];\ncon x @ 1;',
            match='unexpected character',
            line=2,
            col=7,
        ),
        ErrorCase(
            name='arity',
            text='var x in [0, 1];\ncon tanh(x, x) <= 1;',
            match='takes 1 argument',
            line=2,
            col=5,
        ),
        ErrorCase(
            name='unknown_function',
            text='var x1 in [0, 1];\ncon foo(x1) <= 1;',
            match="unknown function 'foo'",
            line=2,
            col=5,
        ),
        ErrorCase(
            name='unknown_function_shadowing_variable',
            text='var x1 in [0, 1];\ncon x1(x1) <= 1;',
            match="unknown function 'x1'",
            line=2,
            col=5,
        ),
        ErrorCase(
            name='empty_domain',
            text='var x in [2, 1];',
            match='empty domain',
            line=1,
            col=5,
        ),
        ErrorCase(
            name='fractional_integer',
            text='var x in [0, 1.5] integer;',
            match='fractional bounds',
            line=1,
            col=5,
        ),
        ErrorCase(
            name='reserved_name',
            text='var pi in [0, 1];',
            match='reserved name',
            line=1,
            col=5,
        ),
        ErrorCase(
            name='never_holds',
            text='var x in [0, 1];\ncon 1 <= 0;',
            match='never holds',
            line=2,
            col=1,
        ),
        ErrorCase(
            name='missing_semicolon',
            text='var x in [0, 1]\nmax x;',
            match="expected ';'",
            line=2,
            col=1,
        ),
        ErrorCase(
            name='missing_sense',
            text='var x in [0, 1];\ncon x + 1;',
            match='expected one of',
            line=2,
            col=10,
        ),
    ),
)
def test_parse_errors(name: str, text: str, match: str, line: int, col: int) -> None:
    with pytest.raises(ParseError, match=match) as exc:
        parse(text)
    assert (exc.value.line, exc.value.col) == (line, col)


@pytest.mark.parametrize('text', (SEPARABLE, NONSEPARABLE))
def test_format_model_reads_back(text: str):
    m = parse(text)
    assert parse(format_model(m)) == m


def test_box():
    box = Box.new([(0, 2), (0, 1)], [True, False])
    assert box.dimension == 2  # noqa: PLR2004
    assert box.center() == (1.0, 0.5)
    assert box.contains((2.0, 0.3))
    assert not box.contains((1.5, 0.3))
    narrowed = box.with_bounds(1, 0.0, 0.5)
    assert narrowed.upper == (2.0, 0.5)
    assert box.upper == (2.0, 1.0)


def test_box_rejects_fractional_integer_bounds():
    with pytest.raises(ModelError, match='fractional bounds'):
        Box.new([(0, 1.5)], [True])
