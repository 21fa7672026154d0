from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from typing import Union

from ddminlp.interval import GAMMA_ARGMIN
from ddminlp.interval import Domains
from ddminlp.interval import Interval
from ddminlp.interval import binary_interval
from ddminlp.interval import reciprocal
from ddminlp.interval import unary_interval
from ddminlp.nodes import Binary
from ddminlp.nodes import Const
from ddminlp.nodes import DomainError
from ddminlp.nodes import Expression
from ddminlp.nodes import ExpressionError
from ddminlp.nodes import Sum
from ddminlp.nodes import Unary
from ddminlp.nodes import Var
from ddminlp.nodes import binary_value
from ddminlp.nodes import sum_values
from ddminlp.nodes import unary_value
from ddminlp.nodes import variables

logger = logging.getLogger(__name__)

Point = Union[Sequence[float], Mapping[int, float]]

__all__ = [
    'Direction',
    'DomainError',
    'ExpressionError',
    'ReindexedTerm',
    'Term',
    'analyze_monotonicity',
    'constant_offset',
    'decompose',
    'evaluate',
    'linear_form',
    'reindex',
]


class Direction(Enum):
    NONDECREASING = 'nondecreasing'
    NONINCREASING = 'nonincreasing'
    UNKNOWN = 'unknown'

    def flip(self) -> Direction:
        if self is Direction.NONDECREASING:
            return Direction.NONINCREASING
        if self is Direction.NONINCREASING:
            return Direction.NONDECREASING
        return self


INC = Direction.NONDECREASING
DEC = Direction.NONINCREASING
UNK = Direction.UNKNOWN


def evaluate(e: Expression, point: Point) -> float:
    """Evaluates `e` at `point`, indexed by variable position."""
    match e:
        case Const(value=v):
            return v
        case Var(index=i):
            return float(point[i])
        case Unary(op=op, arg=a):
            return unary_value(op, evaluate(a, point))
        case Binary(op=op, left=lhs, right=rhs):
            return binary_value(op, evaluate(lhs, point), evaluate(rhs, point))
        case Sum(args=args):
            return sum_values(evaluate(a, point) for a in args)
    err_msg = f'unknown expression node {e!r}'
    raise ExpressionError(err_msg)


@dataclass(frozen=True, slots=True)
class Term:
    """
    One additive piece of a constraint function.

    `variables` is the sorted set of variable positions the expression
    references; it is never empty.
    """

    expr: Expression
    variables: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        found = tuple(sorted(variables(self.expr)))
        if not found:
            err_msg = 'term without variables'
            raise ExpressionError(err_msg)
        object.__setattr__(self, 'variables', found)

    @property
    def hmax(self) -> int:
        return self.variables[-1]

    @property
    def hmin(self) -> int:
        return self.variables[0]

    @property
    def univariate(self) -> bool:
        return len(self.variables) == 1

    def evaluate(self, point: Point) -> float:
        return evaluate(self.expr, point)


@dataclass(frozen=True, slots=True)
class ReindexedTerm:
    """
    A term rewritten so every variable occurrence is a distinct variable.

    `mapping[j]` is the original position of the fresh variable `j`;
    `directions[j]` its certified direction, or None when no box was given.
    """

    expr: Expression
    mapping: tuple[int, ...]
    directions: tuple[Direction, ...] | None = None

    def domains(self, box: Domains) -> tuple[Interval, ...]:
        return tuple(box[i] for i in self.mapping)

    @property
    def certified(self) -> bool:
        return self.directions is not None and UNK not in self.directions


def _negate(e: Expression) -> Expression:
    if isinstance(e, Unary) and e.op == 'neg':
        return e.arg
    return Unary('neg', e)


def _additive_parts(e: Expression) -> tuple[list[Expression], float]:
    """Flattens the additive structure of `e` into parts plus a constant."""
    match e:
        case Const(value=v):
            return [], v
        case Sum(args=args):
            parts: list[Expression] = []
            const = 0.0
            for a in args:
                p, c = _additive_parts(a)
                parts.extend(p)
                const += c
            return parts, const
        case Binary(op='add', left=lhs, right=rhs):
            lp, lc = _additive_parts(lhs)
            rp, rc = _additive_parts(rhs)
            return lp + rp, lc + rc
        case Binary(op='sub', left=lhs, right=rhs):
            lp, lc = _additive_parts(lhs)
            rp, rc = _additive_parts(rhs)
            return lp + [_negate(p) for p in rp], lc - rc
        case Unary(op='neg', arg=a):
            p, c = _additive_parts(a)
            return [_negate(x) for x in p], -c
        case Binary(op='mul', left=Const(value=k), right=rhs):
            p, c = _additive_parts(rhs)
            return [Binary('mul', Const(k), x) for x in p], k * c
        case Binary(op='mul', left=lhs, right=Const(value=k)):
            p, c = _additive_parts(lhs)
            return [Binary('mul', x, Const(k)) for x in p], c * k
        case Binary(op='div', left=lhs, right=Const(value=k)) if k != 0:
            p, c = _additive_parts(lhs)
            return [Binary('div', x, Const(k)) for x in p], c / k
    if not variables(e):
        return [], evaluate(e, ())
    return [e], 0.0


def decompose(e: Expression) -> list[Term]:
    """
    Splits `e` into additive terms.

    Additive parts referencing the same variable set are merged into one
    term, in order of first occurrence. Constant parts are dropped here and
    reported by `constant_offset`.
    """
    parts, _ = _additive_parts(e)
    groups: dict[frozenset[int], list[Expression]] = {}
    for p in parts:
        groups.setdefault(variables(p), []).append(p)
    terms = [Term(ps[0] if len(ps) == 1 else Sum(tuple(ps))) for ps in groups.values()]
    logger.debug(f'decomposed into {len(terms)} terms')
    return terms


def constant_offset(e: Expression) -> float:
    """Returns the constant part dropped by `decompose`."""
    _, const = _additive_parts(e)
    return const


def linear_form(e: Expression) -> tuple[dict[int, float], float] | None:
    """Returns `(coefficients, constant)` if `e` is affine, otherwise None."""
    match e:
        case Const(value=v):
            return {}, v
        case Var(index=i):
            return {i: 1.0}, 0.0
        case Unary(op='neg', arg=a):
            if (f := linear_form(a)) is None:
                return None
            return _scale(f, -1.0)
        case Binary(op='add' | 'sub', left=lhs, right=rhs):
            lf, rf = linear_form(lhs), linear_form(rhs)
            if lf is None or rf is None:
                return None
            sign = 1.0 if e.op == 'add' else -1.0
            return _combine(lf, _scale(rf, sign))
        case Sum(args=args):
            out: tuple[dict[int, float], float] = ({}, 0.0)
            for a in args:
                if (f := linear_form(a)) is None:
                    return None
                out = _combine(out, f)
            return out
        case Binary(op='mul', left=lhs, right=rhs):
            lf, rf = linear_form(lhs), linear_form(rhs)
            if lf is None or rf is None:
                return None
            if not lf[0]:
                return _scale(rf, lf[1])
            if not rf[0]:
                return _scale(lf, rf[1])
            return None
        case Binary(op='div', left=lhs, right=rhs):
            lf, rf = linear_form(lhs), linear_form(rhs)
            if lf is None or rf is None or rf[0] or rf[1] == 0:
                return None
            return _scale(lf, 1.0 / rf[1])
    return None


def _scale(f: tuple[dict[int, float], float], k: float) -> tuple[dict[int, float], float]:
    return {i: k * c for i, c in f[0].items()}, k * f[1]


def _combine(
    a: tuple[dict[int, float], float], b: tuple[dict[int, float], float]
) -> tuple[dict[int, float], float]:
    coefs = dict(a[0])
    for i, c in b[0].items():
        coefs[i] = coefs.get(i, 0.0) + c
    return coefs, a[1] + b[1]


def reindex(t: Term, box: Domains | None = None) -> ReindexedTerm:
    """
    Gives every variable occurrence of `t` its own fresh variable, numbered
    in left-to-right order. With `box`, directions are certified on it.
    """
    mapping: list[int] = []

    def walk(e: Expression) -> Expression:
        match e:
            case Const():
                return e
            case Var(index=i):
                mapping.append(i)
                return Var(len(mapping) - 1)
            case Unary(op=op, arg=a):
                return Unary(op, walk(a))
            case Binary(op=op, left=lhs, right=rhs):
                left = walk(lhs)
                return Binary(op, left, walk(rhs))
            case Sum(args=args):
                return Sum(tuple(walk(a) for a in args))
        err_msg = f'unknown expression node {e!r}'
        raise ExpressionError(err_msg)

    expr = walk(t.expr)
    rt = ReindexedTerm(expr, tuple(mapping))
    if box is None:
        return rt
    domains = rt.domains(box)
    found = analyze_monotonicity(expr, domains)
    directions = tuple(found.get(j, INC) for j in range(len(mapping)))
    logger.debug(f'reindexed {len(mapping)} occurrences, directions={directions}')
    return ReindexedTerm(expr, rt.mapping, directions)


Dirs = dict[int, Direction]


def _merge(a: Direction, b: Direction) -> Direction:
    return a if a is b else UNK


def _combine_dirs(*parts: Dirs) -> Dirs:
    out: Dirs = {}
    for part in parts:
        for v, d in part.items():
            out[v] = _merge(out[v], d) if v in out else d
    return out


def _compose(outer: Direction, inner: Dirs) -> Dirs:
    if outer is INC:
        return dict(inner)
    if outer is DEC:
        return {v: d.flip() for v, d in inner.items()}
    return dict.fromkeys(inner, UNK)


def _sign(r: Interval) -> Direction:
    """Direction of `t -> s*t` for a multiplier `s` ranging over `r`."""
    if r.lo >= 0:
        return INC
    if r.hi <= 0:
        return DEC
    return UNK


def _within(a: Interval, start: float, period: float, length: float) -> bool:
    """True if `a` sits inside one window `[start + k*period, start + k*period + length]`."""
    if not a.width < period:
        return False
    k = math.floor((a.lo - start) / period)
    return a.hi <= start + k * period + length


def _unary_direction(op: str, a: Interval) -> Direction:  # noqa: PLR0911
    match op:
        case 'neg':
            return DEC
        case 'exp' | 'log' | 'sqrt' | 'arctan' | 'tanh' | 'erf' | 'floor' | 'tan':
            return INC
        case 'abs' | 'l0':
            return _sign(a)
        case 'sin' | 'cos':
            shift = 0.0 if op == 'sin' else 0.5 * math.pi
            b = Interval(a.lo + shift, a.hi + shift)
            if _within(b, -0.5 * math.pi, 2 * math.pi, math.pi):
                return INC
            if _within(b, 0.5 * math.pi, 2 * math.pi, math.pi):
                return DEC
            return UNK
        case 'gamma':
            if a.lo >= GAMMA_ARGMIN:
                return INC
            if a.lo > 0 and a.hi <= GAMMA_ARGMIN:
                return DEC
            return UNK
    return UNK


def _power_direction(base: Interval, p: float) -> Direction | None:  # noqa: PLR0911
    """Direction of `t -> t**p` on `base`; None means constant."""
    if p == math.floor(p):
        k = int(p)
        if k == 0:
            return None
        if k > 0:
            return INC if k % 2 == 1 else _sign(base)
        if base.lo <= 0 <= base.hi:
            return UNK
        if k % 2 == 1:
            return DEC
        return DEC if base.lo > 0 else INC
    if base.lo < 0:
        return UNK
    return INC if p > 0 else DEC


def _binary_direction(  # noqa: C901, PLR0911
    op: str, lr: Interval, ld: Dirs, rr: Interval, rd: Dirs
) -> Dirs:
    match op:
        case 'add':
            return _combine_dirs(ld, rd)
        case 'sub':
            return _combine_dirs(ld, _compose(DEC, rd))
        case 'mul':
            return _combine_dirs(_compose(_sign(rr), ld), _compose(_sign(lr), rd))
        case 'div':
            inv = reciprocal(rr)
            return _combine_dirs(_compose(_sign(inv), ld), _compose(_sign(lr), _compose(DEC, rd)))
        case 'pow':
            if not rd and rr.lo == rr.hi:
                outer = _power_direction(lr, rr.lo)
                return {} if outer is None else _compose(outer, ld)
            if lr.lo <= 0:
                return _compose(UNK, _combine_dirs(ld, rd))
            in_base = _compose(_sign(rr), ld)
            if lr.lo >= 1:
                in_exp = _compose(INC, rd)
            elif lr.hi <= 1:
                in_exp = _compose(DEC, rd)
            else:
                in_exp = _compose(UNK, rd)
            return _combine_dirs(in_base, in_exp)
        case 'mod':
            if not rd and rr.lo == rr.hi and rr.lo != 0:
                p = rr.lo
                if math.floor(lr.lo / p) == math.floor(lr.hi / p):
                    return dict(ld)
            return _compose(UNK, _combine_dirs(ld, rd))
        case 'centropy':
            if lr.lo < 0 or rr.lo <= 0:
                return _compose(UNK, _combine_dirs(ld, rd))
            if lr.lo >= rr.hi / math.e:
                in_x = _compose(INC, ld)
            elif lr.hi <= rr.lo / math.e:
                in_x = _compose(DEC, ld)
            else:
                in_x = _compose(UNK, ld)
            return _combine_dirs(in_x, _compose(DEC, rd))
    return _compose(UNK, _combine_dirs(ld, rd))


def _monotone(e: Expression, box: Domains) -> tuple[Interval, Dirs]:
    match e:
        case Const(value=v):
            return Interval.point(v), {}
        case Var(index=i):
            return box[i], {i: INC}
        case Unary(op=op, arg=a):
            r, d = _monotone(a, box)
            return unary_interval(op, r), _compose(_unary_direction(op, r), d)
        case Binary(op=op, left=lhs, right=rhs):
            lr, ld = _monotone(lhs, box)
            rr, rd = _monotone(rhs, box)
            return binary_interval(op, lr, rr), _binary_direction(op, lr, ld, rr, rd)
        case Sum(args=args):
            results = [_monotone(a, box) for a in args]
            lo = sum_values(r.lo for r, _ in results)
            hi = sum_values(r.hi for r, _ in results)
            return Interval(lo, hi), _combine_dirs(*(d for _, d in results))
    err_msg = f'unknown expression node {e!r}'
    raise ExpressionError(err_msg)


def analyze_monotonicity(e: Expression, box: Domains) -> dict[int, Direction]:
    """
    Certifies, per variable of `e`, whether `e` is nondecreasing or
    nonincreasing in it over `box`. Anything not provable is `UNKNOWN`.
    """
    try:
        _, dirs = _monotone(e, box)
    except DomainError as exc:
        logger.debug(f'monotonicity analysis gave up: {exc}')
        return dict.fromkeys(sorted(variables(e)), UNK)
    return {v: dirs.get(v, INC) for v in sorted(variables(e))}
