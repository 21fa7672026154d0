from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Union

# operator inventories understood by the parser, the evaluator and the
# interval extension
UNARY_OPS = frozenset(
    {
        'neg',
        'exp',
        'log',
        'sqrt',
        'abs',
        'sin',
        'cos',
        'tan',
        'arctan',
        'tanh',
        'erf',
        'gamma',
        'floor',
        'l0',
    }
)
BINARY_OPS = frozenset({'add', 'sub', 'mul', 'div', 'pow', 'mod', 'centropy'})

# function names callable from instance files
FUNCTIONS: dict[str, int] = {
    'exp': 1,
    'log': 1,
    'sqrt': 1,
    'abs': 1,
    'sin': 1,
    'cos': 1,
    'tan': 1,
    'arctan': 1,
    'tanh': 1,
    'erf': 1,
    'gamma': 1,
    'floor': 1,
    'l0': 1,
    'mod': 2,
    'centropy': 2,
}

CONSTANTS: dict[str, float] = {'pi': math.pi, 'e': math.e}


class ExpressionError(Exception): ...


class DomainError(ExpressionError): ...


@dataclass(frozen=True, slots=True)
class Const:
    """Numeric literal."""

    value: float


@dataclass(frozen=True, slots=True)
class Var:
    """Reference to the variable at position `index`."""

    index: int


@dataclass(frozen=True, slots=True)
class Unary:
    op: str
    arg: Expression


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Sum:
    """N-ary sum, produced when additive parts sharing a support are merged."""

    args: tuple[Expression, ...]


Expression = Union[Const, Var, Unary, Binary, Sum]


def variables(e: Expression) -> frozenset[int]:
    """Returns the set of variable indices referenced by `e`."""
    match e:
        case Const():
            return frozenset()
        case Var(index=i):
            return frozenset((i,))
        case Unary(arg=a):
            return variables(a)
        case Binary(left=lhs, right=rhs):
            return variables(lhs) | variables(rhs)
        case Sum(args=args):
            out: frozenset[int] = frozenset()
            for a in args:
                out |= variables(a)
            return out
    err_msg = f'unknown expression node {e!r}'
    raise TypeError(err_msg)


def sum_values(values: Iterable[float]) -> float:
    """Exact float sum; opposite infinities raise `DomainError`."""
    try:
        return math.fsum(values)
    except ValueError as exc:
        err_msg = 'sum of opposite infinities is undefined'
        raise DomainError(err_msg) from exc


def unary_value(op: str, x: float) -> float:
    """
    Evaluates a unary operator at `x` with IEEE double semantics.

    Overflow saturates to infinity; points where the result is undefined,
    NaN included, raise `DomainError`.
    """
    try:
        value = _unary(op, x)
    except ValueError as exc:
        err_msg = f'{op} undefined at {x!r}'
        raise DomainError(err_msg) from exc
    if math.isnan(value):
        err_msg = f'{op} undefined at {x!r}'
        raise DomainError(err_msg)
    return value


def _unary(op: str, x: float) -> float:
    try:
        match op:
            case 'neg':
                return -x
            case 'exp':
                return math.exp(x)
            case 'log':
                if x <= 0:
                    err_msg = f'log undefined at {x!r}'
                    raise DomainError(err_msg)
                return math.log(x)
            case 'sqrt':
                if x < 0:
                    err_msg = f'sqrt undefined at {x!r}'
                    raise DomainError(err_msg)
                return math.sqrt(x)
            case 'abs':
                return abs(x)
            case 'sin':
                return math.sin(x)
            case 'cos':
                return math.cos(x)
            case 'tan':
                return math.tan(x)
            case 'arctan':
                return math.atan(x)
            case 'tanh':
                return math.tanh(x)
            case 'erf':
                return math.erf(x)
            case 'gamma':
                if x <= 0 and x == math.floor(x):
                    err_msg = f'gamma undefined at {x!r}'
                    raise DomainError(err_msg)
                return math.gamma(x)
            case 'floor':
                return float(math.floor(x))
            case 'l0':
                return 0.0 if x == 0 else 1.0
    except OverflowError:
        return math.inf
    err_msg = f'unknown unary operator {op!r}'
    raise ExpressionError(err_msg)


def binary_value(op: str, a: float, b: float) -> float:
    """Evaluates a binary operator at `(a, b)`; undefined results raise `DomainError`."""
    try:
        value = _binary(op, a, b)
    except (ValueError, OverflowError) as exc:
        err_msg = f'{op} undefined at ({a!r}, {b!r})'
        raise DomainError(err_msg) from exc
    if math.isnan(value):
        err_msg = f'{op} undefined at ({a!r}, {b!r})'
        raise DomainError(err_msg)
    return value


def _binary(op: str, a: float, b: float) -> float:
    match op:
        case 'add':
            return a + b
        case 'sub':
            return a - b
        case 'mul':
            return a * b
        case 'div':
            if b == 0:
                err_msg = f'division by zero ({a!r} / {b!r})'
                raise DomainError(err_msg)
            return a / b
        case 'pow':
            return _power(a, b)
        case 'mod':
            if b == 0:
                err_msg = f'mod by zero ({a!r} mod {b!r})'
                raise DomainError(err_msg)
            return a - b * math.floor(a / b)
        case 'centropy':
            if a < 0 or b <= 0:
                err_msg = f'centropy undefined at ({a!r}, {b!r})'
                raise DomainError(err_msg)
            return 0.0 if a == 0 else a * math.log(a / b)
    err_msg = f'unknown binary operator {op!r}'
    raise ExpressionError(err_msg)


def _power(a: float, b: float) -> float:
    if a == 0 and b < 0:
        err_msg = f'zero raised to negative power {b!r}'
        raise DomainError(err_msg)
    if a < 0 and b != math.floor(b):
        err_msg = f'negative base {a!r} with fractional exponent {b!r}'
        raise DomainError(err_msg)
    try:
        return math.pow(a, b)
    except OverflowError:
        if a < 0 and b % 2 == 1:
            return -math.inf
        return math.inf
