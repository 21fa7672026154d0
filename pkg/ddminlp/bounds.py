from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum

from ddminlp.expr import Direction
from ddminlp.expr import ReindexedTerm
from ddminlp.expr import Term
from ddminlp.expr import analyze_monotonicity
from ddminlp.expr import evaluate
from ddminlp.expr import reindex
from ddminlp.interval import Domains
from ddminlp.interval import Interval
from ddminlp.interval import enclose

logger = logging.getLogger(__name__)

# number of grid cells the interval rule may split a term's anchor box into
GRID_BUDGET = 64


class NotMonotoneError(Exception): ...


class RuleKind(Enum):
    MONOTONE = 'monotone'
    REINDEXED = 'reindexed'
    INTERVAL = 'interval'


@dataclass(frozen=True, slots=True)
class BoundRule:
    """
    Lower-bounding rule for one term, fixed once on an anchor box.

    `anchor` holds the domains of the term's variables at selection time,
    in `Term.variables` order; the interval grid is laid over it.
    """

    kind: RuleKind
    anchor: tuple[Interval, ...]
    directions: tuple[Direction, ...] = ()
    reindexed: ReindexedTerm | None = None


def select_rule(t: Term, box: Domains) -> BoundRule:
    """Picks the strongest rule certified on `box`."""
    anchor = tuple(box[i] for i in t.variables)
    found = analyze_monotonicity(t.expr, box)
    directions = tuple(found[i] for i in t.variables)
    if Direction.UNKNOWN not in directions:
        return BoundRule(RuleKind.MONOTONE, anchor, directions)
    rt = reindex(t, box)
    if rt.certified:
        return BoundRule(RuleKind.REINDEXED, anchor, reindexed=rt)
    logger.debug(f'term over {t.variables} falls back to interval bounds')
    return BoundRule(RuleKind.INTERVAL, anchor)


def _corner(d: Direction, r: Interval) -> float:
    return r.lo if d is Direction.NONDECREASING else r.hi


def lower_bound_monotone(
    t: Term, box: Domains, directions: tuple[Direction, ...] | None = None
) -> float:
    """Evaluates `t` at the corner of `box` where it is smallest."""
    if directions is None:
        found = analyze_monotonicity(t.expr, box)
        directions = tuple(found[i] for i in t.variables)
    if Direction.UNKNOWN in directions:
        err_msg = f'term over {t.variables} is not monotone in every variable'
        raise NotMonotoneError(err_msg)
    point = {i: _corner(d, box[i]) for i, d in zip(t.variables, directions)}
    return t.evaluate(point)


def lower_bound_reindexed(t: Term, box: Domains, rt: ReindexedTerm | None = None) -> float:
    """Evaluates the re-indexed term at its minimizing corner over `box`."""
    if rt is None or rt.directions is None:
        rt = reindex(t, box)
    if not rt.certified:
        err_msg = f're-indexed term over {t.variables} is not monotone'
        raise NotMonotoneError(err_msg)
    assert rt.directions is not None
    point = [_corner(d, r) for d, r in zip(rt.directions, rt.domains(box))]
    return evaluate(rt.expr, point)


def grid_cells(anchor: Interval, count: int, query: Interval, integer: bool) -> list[Interval]:
    """
    Pieces of `query` cut by a grid of `count` equal cells over `anchor`.

    With `integer` the pieces are rounded inward to integers, dropping
    empty and repeated ones.
    """
    if count <= 1 or anchor.width <= 0:
        pieces = [query]
    else:
        h = anchor.width / count
        k_lo = min(max(math.floor((query.lo - anchor.lo) / h), 0), count - 1)
        k_hi = min(max(math.ceil((query.hi - anchor.lo) / h) - 1, k_lo), count - 1)
        pieces = []
        for k in range(k_lo, k_hi + 1):
            lo = query.lo if k == k_lo else max(query.lo, anchor.lo + k * h)
            hi = query.hi if k == k_hi else min(query.hi, anchor.lo + (k + 1) * h)
            if lo <= hi:
                pieces.append(Interval(lo, hi))
    if not integer:
        return pieces
    rounded: list[Interval] = []
    for p in pieces:
        lo, hi = math.ceil(p.lo - 1e-9), math.floor(p.hi + 1e-9)
        if lo <= hi and (not rounded or rounded[-1] != Interval(lo, hi)):
            rounded.append(Interval(float(lo), float(hi)))
    return rounded


def lower_bound_interval(
    t: Term,
    box: Domains,
    anchor: tuple[Interval, ...] | None = None,
    integer: tuple[bool, ...] | None = None,
) -> float:
    """
    Interval lower bound of `t` over `box`, refined on a fixed grid.

    The grid is laid over `anchor` (default: `box` itself); the bound is the
    smallest natural interval extension over the grid cells meeting `box`.
    """
    if anchor is None:
        anchor = tuple(box[i] for i in t.variables)
    flags = integer or (False,) * len(t.variables)
    per_dim = max(1, int(GRID_BUDGET ** (1.0 / len(t.variables)) + 1e-9))
    axes = [
        grid_cells(a, per_dim, box[i], flag)
        for i, a, flag in zip(t.variables, anchor, flags)
    ]
    best = math.inf
    for cell in itertools.product(*axes):
        domains = dict(zip(t.variables, cell))
        best = min(best, enclose(t.expr, domains).lo)
    return best


def lower_bound(
    t: Term,
    box: Domains,
    rule: BoundRule | None = None,
    integer: tuple[bool, ...] | None = None,
) -> float:
    """
    Valid lower bound of `t` over `box` using `rule`, selected on `box`
    when not given. `integer` flags the term's variables, in order.
    """
    rule = rule or select_rule(t, box)
    match rule.kind:
        case RuleKind.MONOTONE:
            return lower_bound_monotone(t, box, rule.directions)
        case RuleKind.REINDEXED:
            corner = lower_bound_reindexed(t, box, rule.reindexed)
            return max(corner, lower_bound_interval(t, box, rule.anchor, integer))
        case RuleKind.INTERVAL:
            return lower_bound_interval(t, box, rule.anchor, integer)
    err_msg = f'unknown bound rule {rule.kind!r}'
    raise ValueError(err_msg)
