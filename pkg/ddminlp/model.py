from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

from ddminlp.expr import Term
from ddminlp.expr import linear_form
from ddminlp.interval import Interval
from ddminlp.nodes import Binary
from ddminlp.nodes import Const
from ddminlp.nodes import Expression
from ddminlp.nodes import Sum
from ddminlp.nodes import Unary
from ddminlp.nodes import Var
from ddminlp.nodes import sum_values

BINARY_SYMBOLS = {'add': '+', 'sub': '-', 'mul': '*', 'div': '/', 'pow': '^'}


class ModelError(Exception): ...


@dataclass(frozen=True, slots=True)
class Variable:
    name: str
    lower: float
    upper: float
    integer: bool = False


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned box with per-variable integrality."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    integer: tuple[bool, ...]

    def __post_init__(self) -> None:
        if not len(self.lower) == len(self.upper) == len(self.integer):
            err_msg = 'box bounds and integrality flags differ in length'
            raise ModelError(err_msg)
        for i, (lo, hi, intg) in enumerate(zip(self.lower, self.upper, self.integer)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                err_msg = f'variable {i} has an unbounded domain [{lo}, {hi}]'
                raise ModelError(err_msg)
            if lo > hi:
                err_msg = f'variable {i} has an empty domain [{lo}, {hi}]'
                raise ModelError(err_msg)
            if intg and (lo != math.floor(lo) or hi != math.floor(hi)):
                err_msg = f'integer variable {i} has fractional bounds [{lo}, {hi}]'
                raise ModelError(err_msg)

    @classmethod
    def new(cls, bounds: Sequence[tuple[float, float]], integer: Sequence[bool] = ()) -> Box:
        flags = tuple(integer) or (False,) * len(bounds)
        return cls(
            tuple(float(lo) for lo, _ in bounds),
            tuple(float(hi) for _, hi in bounds),
            flags,
        )

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def domains(self) -> tuple[Interval, ...]:
        return tuple(Interval(lo, hi) for lo, hi in zip(self.lower, self.upper))

    def width(self, i: int) -> float:
        return self.upper[i] - self.lower[i]

    def center(self) -> tuple[float, ...]:
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.lower, self.upper))

    def with_bounds(self, i: int, lo: float, hi: float) -> Box:
        lower, upper = list(self.lower), list(self.upper)
        lower[i], upper[i] = lo, hi
        return Box(tuple(lower), tuple(upper), self.integer)

    def contains(self, point: Sequence[float], tol: float = 1e-9) -> bool:
        for x, lo, hi, intg in zip(point, self.lower, self.upper, self.integer):
            if not lo - tol <= x <= hi + tol:
                return False
            if intg and abs(x - round(x)) > tol:
                return False
        return True


@dataclass(frozen=True, slots=True)
class ConstraintSpec:
    """Constraint `sum(terms) <= rhs`."""

    terms: tuple[Term, ...]
    rhs: float
    name: str = field(default='', compare=False)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(sorted({i for t in self.terms for i in t.variables}))

    @property
    def separable(self) -> bool:
        return all(t.univariate for t in self.terms)

    def linear(self) -> dict[int, float] | None:
        """Coefficients if every term is affine, otherwise None."""
        coefs: dict[int, float] = {}
        for t in self.terms:
            if (f := linear_form(t.expr)) is None:
                return None
            for i, c in f[0].items():
                coefs[i] = coefs.get(i, 0.0) + c
        return coefs

    def value(self, point: Sequence[float]) -> float:
        return sum_values(t.evaluate(point) for t in self.terms)

    def violation(self, point: Sequence[float]) -> float:
        return self.value(point) - self.rhs


@dataclass(frozen=True, slots=True)
class Epigraph:
    """Auxiliary variable standing for a nonlinear objective."""

    index: int
    expr: Expression


@dataclass(frozen=True, slots=True)
class Model:
    """
    Maximize `objective . x + offset` subject to `constraints` and the
    variable bounds. Minimization problems are stored negated with
    `minimize` set, so reported values are `-(objective . x + offset)`.
    """

    variables: tuple[Variable, ...]
    objective: tuple[float, ...]
    constraints: tuple[ConstraintSpec, ...] = ()
    offset: float = 0.0
    minimize: bool = False
    primal_bound: float | None = None
    epigraph: Epigraph | None = field(default=None, compare=False)
    name: str = field(default='', compare=False)

    def __post_init__(self) -> None:
        if len(self.objective) != len(self.variables):
            err_msg = 'objective length does not match the number of variables'
            raise ModelError(err_msg)
        for k, c in enumerate(self.constraints):
            for i in c.variables:
                if not 0 <= i < len(self.variables):
                    err_msg = f'constraint {k} references unknown variable {i}'
                    raise ModelError(err_msg)

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def box(self) -> Box:
        return Box(
            tuple(v.lower for v in self.variables),
            tuple(v.upper for v in self.variables),
            tuple(v.integer for v in self.variables),
        )

    def objective_value(self, point: Sequence[float]) -> float:
        return math.fsum(c * x for c, x in zip(self.objective, point)) + self.offset

    def report_value(self, value: float) -> float:
        """Converts a maximization-form value back to the model's own sense."""
        return -value if self.minimize else value


def format_expression(e: Expression, names: Sequence[str]) -> str:
    """Prints `e` in the instance grammar, fully parenthesized."""
    match e:
        case Const(value=v):
            return f'({v!r})' if v < 0 else repr(v)
        case Var(index=i):
            return names[i]
        case Unary(op='neg', arg=a):
            return f'(-{format_expression(a, names)})'
        case Unary(op=op, arg=a):
            return f'{op}({format_expression(a, names)})'
        case Binary(op=op, left=lhs, right=rhs) if op in BINARY_SYMBOLS:
            left, right = format_expression(lhs, names), format_expression(rhs, names)
            return f'({left} {BINARY_SYMBOLS[op]} {right})'
        case Binary(op=op, left=lhs, right=rhs):
            left, right = format_expression(lhs, names), format_expression(rhs, names)
            return f'{op}({left}, {right})'
        case Sum(args=args):
            return '(' + ' + '.join(format_expression(a, names) for a in args) + ')'
    err_msg = f'unknown expression node {e!r}'
    raise ModelError(err_msg)


def _format_linear(coefs: Sequence[float], offset: float, names: Sequence[str]) -> str:
    parts = [f'({c!r} * {names[i]})' for i, c in enumerate(coefs) if c != 0]
    if offset != 0 or not parts:
        parts.append(f'({offset!r})' if offset < 0 else repr(offset))
    return ' + '.join(parts)


def format_model(m: Model) -> str:
    """Prints `m` in the instance grammar; `parse` reads it back unchanged."""
    names = m.names
    lines: list[str] = []
    for v in m.variables:
        flag = ' integer' if v.integer else ''
        lines.append(f'var {v.name} in [{v.lower!r}, {v.upper!r}]{flag};')
    if m.minimize or m.offset != 0 or any(c != 0 for c in m.objective):
        if m.minimize:
            body = _format_linear([-c for c in m.objective], -m.offset, names)
            lines.append(f'min {body};')
        else:
            lines.append(f'max {_format_linear(m.objective, m.offset, names)};')
    for c in m.constraints:
        body = ' + '.join(format_expression(t.expr, names) for t in c.terms)
        lines.append(f'con {body} <= {c.rhs!r};')
    if m.primal_bound is not None:
        lines.append(f'primal {m.primal_bound!r};')
    return '\n'.join(lines) + '\n'
