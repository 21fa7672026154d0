from __future__ import annotations

import math
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union

from ddminlp.nodes import Binary
from ddminlp.nodes import Const
from ddminlp.nodes import DomainError
from ddminlp.nodes import Expression
from ddminlp.nodes import ExpressionError
from ddminlp.nodes import Sum
from ddminlp.nodes import Unary
from ddminlp.nodes import Var
from ddminlp.nodes import binary_value
from ddminlp.nodes import unary_value

TWO_PI = 2.0 * math.pi

# positive minimum of the gamma function
GAMMA_ARGMIN = 1.4616321449683623
GAMMA_MIN = 0.8856031944108887


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed real interval `[lo, hi]`."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            err_msg = f'empty interval [{self.lo}, {self.hi}]'
            raise ValueError(err_msg)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def hull(self, other: Interval) -> Interval:
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __str__(self) -> str:
        return f'[{self.lo:g}, {self.hi:g}]'


# variable domains indexed by variable position, either dense or sparse
Domains = Union[Sequence[Interval], Mapping[int, Interval]]


def enclose(e: Expression, domains: Domains) -> Interval:
    """
    Natural interval extension of `e` over the box `domains`.

    Raises `DomainError` when the box reaches a point where `e` is undefined.
    """
    match e:
        case Const(value=v):
            return Interval.point(v)
        case Var(index=i):
            return domains[i]
        case Unary(op=op, arg=a):
            return unary_interval(op, enclose(a, domains))
        case Binary(op=op, left=lhs, right=rhs):
            return binary_interval(op, enclose(lhs, domains), enclose(rhs, domains))
        case Sum(args=args):
            lo = hi = 0.0
            for a in args:
                r = enclose(a, domains)
                lo += r.lo
                hi += r.hi
            return Interval(lo, hi)
    err_msg = f'unknown expression node {e!r}'
    raise ExpressionError(err_msg)


def _mul(x: float, y: float) -> float:
    if x == 0 or y == 0:
        return 0.0
    return x * y


def mul(a: Interval, b: Interval) -> Interval:
    products = (_mul(a.lo, b.lo), _mul(a.lo, b.hi), _mul(a.hi, b.lo), _mul(a.hi, b.hi))
    return Interval(min(products), max(products))


def reciprocal(a: Interval) -> Interval:
    if a.lo <= 0 <= a.hi:
        err_msg = f'division by an interval containing zero {a}'
        raise DomainError(err_msg)
    return Interval(1.0 / a.hi, 1.0 / a.lo)


def _increasing(op: str, a: Interval) -> Interval:
    return Interval(unary_value(op, a.lo), unary_value(op, a.hi))


def _contains_phase(a: Interval, phase: float) -> bool:
    """True if `a` holds a point `phase + 2k*pi` for some integer k."""
    k = math.ceil((a.lo - phase) / TWO_PI)
    return phase + k * TWO_PI <= a.hi


def _periodic(op: str, a: Interval, peak: float, trough: float) -> Interval:
    # also catches [inf, inf], whose width is NaN
    if not a.width < TWO_PI:
        return Interval(-1.0, 1.0)
    ends = (unary_value(op, a.lo), unary_value(op, a.hi))
    hi = 1.0 if _contains_phase(a, peak) else max(ends)
    lo = -1.0 if _contains_phase(a, trough) else min(ends)
    return Interval(lo, hi)


def _even_power(a: Interval, k: int) -> Interval:
    lo, hi = a.lo**k, a.hi**k
    if a.lo >= 0:
        return Interval(lo, hi)
    if a.hi <= 0:
        return Interval(hi, lo)
    return Interval(0.0, max(lo, hi))


def unary_interval(op: str, a: Interval) -> Interval:  # noqa: C901, PLR0911
    """Exact range of a unary operator over `a`."""
    match op:
        case 'neg':
            return Interval(-a.hi, -a.lo)
        case 'exp' | 'tanh' | 'arctan' | 'erf' | 'floor':
            return _increasing(op, a)
        case 'log':
            if a.lo <= 0:
                err_msg = f'log undefined on {a}'
                raise DomainError(err_msg)
            return _increasing(op, a)
        case 'sqrt':
            if a.lo < 0:
                err_msg = f'sqrt undefined on {a}'
                raise DomainError(err_msg)
            return _increasing(op, a)
        case 'abs':
            if a.lo >= 0:
                return a
            if a.hi <= 0:
                return Interval(-a.hi, -a.lo)
            return Interval(0.0, max(-a.lo, a.hi))
        case 'l0':
            if a.lo == 0 == a.hi:
                return Interval(0.0, 0.0)
            if a.lo > 0 or a.hi < 0:
                return Interval(1.0, 1.0)
            return Interval(0.0, 1.0)
        case 'sin':
            return _periodic(op, a, 0.5 * math.pi, -0.5 * math.pi)
        case 'cos':
            return _periodic(op, a, 0.0, math.pi)
        case 'tan':
            k = math.ceil((a.lo - 0.5 * math.pi) / math.pi)
            if 0.5 * math.pi + k * math.pi <= a.hi:
                err_msg = f'tan undefined on {a}'
                raise DomainError(err_msg)
            return _increasing(op, a)
        case 'gamma':
            if a.lo <= 0:
                err_msg = f'gamma interval rule needs a positive range, got {a}'
                raise DomainError(err_msg)
            lo, hi = unary_value(op, a.lo), unary_value(op, a.hi)
            if a.contains(GAMMA_ARGMIN):
                return Interval(GAMMA_MIN, max(lo, hi))
            return Interval(min(lo, hi), max(lo, hi))
    err_msg = f'unknown unary operator {op!r}'
    raise ExpressionError(err_msg)


def power(a: Interval, b: Interval) -> Interval:
    if b.lo == b.hi:
        p = b.lo
        if p == math.floor(p):
            k = int(p)
            if k == 0:
                return Interval(1.0, 1.0)
            if k < 0:
                return reciprocal(power(a, Interval.point(-p)))
            if k % 2 == 0:
                return _even_power(a, k)
            return Interval(a.lo**k, a.hi**k)
        if a.lo < 0 or (p < 0 and a.lo == 0):
            err_msg = f'fractional power {p} undefined on {a}'
            raise DomainError(err_msg)
        lo, hi = binary_value('pow', a.lo, p), binary_value('pow', a.hi, p)
        return Interval(min(lo, hi), max(lo, hi))
    if a.lo == a.hi and a.lo > 0:
        lo, hi = binary_value('pow', a.lo, b.lo), binary_value('pow', a.lo, b.hi)
        return Interval(min(lo, hi), max(lo, hi))
    if a.lo <= 0:
        err_msg = f'variable exponent needs a positive base, got {a}'
        raise DomainError(err_msg)
    exponent = mul(b, _increasing('log', a))
    return _increasing('exp', exponent)


def modulo(a: Interval, b: Interval) -> Interval:
    if b.lo <= 0 <= b.hi:
        err_msg = f'mod by an interval containing zero {b}'
        raise DomainError(err_msg)
    if b.lo == b.hi:
        p = b.lo
        k = math.floor(a.lo / p)
        if k == math.floor(a.hi / p):
            lo, hi = a.lo - k * p, a.hi - k * p
            return Interval(min(lo, hi), max(lo, hi))
    if b.lo > 0:
        return Interval(0.0, b.hi)
    return Interval(b.lo, 0.0)


def centropy(a: Interval, b: Interval) -> Interval:
    if a.lo < 0 or b.lo <= 0:
        err_msg = f'centropy undefined on {a} x {b}'
        raise DomainError(err_msg)
    # convex in the first argument, nonincreasing in the second
    argmin = min(max(b.hi / math.e, a.lo), a.hi)
    lo = binary_value('centropy', argmin, b.hi)
    hi = max(binary_value('centropy', a.lo, b.lo), binary_value('centropy', a.hi, b.lo))
    return Interval(lo, hi)


def binary_interval(op: str, a: Interval, b: Interval) -> Interval:
    """Exact range of a binary operator over `a x b`."""
    match op:
        case 'add':
            return Interval(a.lo + b.lo, a.hi + b.hi)
        case 'sub':
            return Interval(a.lo - b.hi, a.hi - b.lo)
        case 'mul':
            return mul(a, b)
        case 'div':
            return mul(a, reciprocal(b))
        case 'pow':
            return power(a, b)
        case 'mod':
            return modulo(a, b)
        case 'centropy':
            return centropy(a, b)
    err_msg = f'unknown binary operator {op!r}'
    raise ExpressionError(err_msg)
