from __future__ import annotations

import dataclasses
import heapq
import logging
import math
import time
from collections.abc import Callable
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from typing import Any

import numpy as np

from ddminlp.bounds import BoundRule
from ddminlp.bounds import select_rule
from ddminlp.dd import DecisionDiagram
from ddminlp.dd import MergePolicy
from ddminlp.dd import build
from ddminlp.dd import make_partitions
from ddminlp.expr import evaluate
from ddminlp.expr import linear_form
from ddminlp.interval import enclose
from ddminlp.lp import LinearProgram
from ddminlp.lp import LpError
from ddminlp.lp import LpStatus
from ddminlp.lp import solve_lp
from ddminlp.model import Box
from ddminlp.model import ConstraintSpec
from ddminlp.model import Model
from ddminlp.nodes import ExpressionError
from ddminlp.separation import CutPlane
from ddminlp.separation import CutPool
from ddminlp.separation import separate_exact
from ddminlp.separation import separate_subgradient

logger = logging.getLogger(__name__)

PRUNE_TOL = 1e-6
MIN_WIDTH = 1e-6
CLAMP = 0.1
GAP_FLOOR = 1e-9
BISECTION_STEPS = 12
# relative padding of the objective enclosure, covers rounding in interval arithmetic
EPIGRAPH_PAD = 1e-9


class AtomicBoxError(Exception): ...


class SolveStatus(Enum):
    OPTIMAL = 'optimal'
    INFEASIBLE = 'infeasible'
    TIME_LIMIT = 'time_limit'
    NODE_LIMIT = 'node_limit'


class Separation(Enum):
    SUBGRADIENT = 'subgradient'
    EXACT = 'exact'


class Prune(Enum):
    BOUND = 'bound'
    INFEASIBLE = 'infeasible'
    FEASIBLE = 'feasible'
    KEEP = 'keep'


def _boolean(value: str) -> bool:
    match value.strip().lower():
        case '1' | 'yes' | 'true' | 'on':
            return True
        case '0' | 'no' | 'false' | 'off':
            return False
    err_msg = f'not a boolean: {value!r}'
    raise ValueError(err_msg)


def _optional_int(value: str) -> int | None:
    return None if value.strip().lower() in ('', 'none') else int(value)


CONVERTERS: dict[str, Callable[[str], Any]] = {
    'gap': float,
    'time_limit': float,
    'partitions': int,
    'width': int,
    'merge': MergePolicy,
    'separation': Separation,
    'sg_iters': int,
    'sg_step': float,
    'cut_rounds': int,
    'exact_fallback': _boolean,
    'node_limit': _optional_int,
    'feas_tol': float,
    'seed': int,
}


@dataclass(slots=True)
class SolverConfig:
    """Knobs of the branch-and-bound search."""

    gap: float = 0.05
    time_limit: float = 5000.0
    partitions: int = 50
    width: int = 5000
    merge: MergePolicy = MergePolicy.G
    separation: Separation = Separation.SUBGRADIENT
    sg_iters: int = 50
    sg_step: float = 1.0
    cut_rounds: int = 20
    exact_fallback: bool = False
    node_limit: int | None = None
    feas_tol: float = 1e-6
    # reserved, the search is deterministic
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gap < 0:
            err_msg = f'gap tolerance must be non-negative, got {self.gap}'
            raise ValueError(err_msg)
        positive = ('time_limit', 'partitions', 'width', 'sg_iters', 'sg_step', 'feas_tol')
        for name in positive:
            if getattr(self, name) <= 0:
                err_msg = f'{name} must be positive, got {getattr(self, name)}'
                raise ValueError(err_msg)
        if self.cut_rounds < 0:
            err_msg = f'cut_rounds must be non-negative, got {self.cut_rounds}'
            raise ValueError(err_msg)
        if self.node_limit is not None and self.node_limit < 1:
            err_msg = f'node_limit must be positive, got {self.node_limit}'
            raise ValueError(err_msg)

    def update(self, values: Mapping[str, Any]) -> SolverConfig:
        """Copy with `values` applied; string values are converted by field."""
        changes: dict[str, Any] = {}
        for key, value in values.items():
            name = key.replace('-', '_')
            if name not in CONVERTERS:
                err_msg = f'unknown solver option {key!r}'
                raise ValueError(err_msg)
            changes[name] = CONVERTERS[name](value) if isinstance(value, str) else value
        return dataclasses.replace(self, **changes)


@dataclass(slots=True)
class BnbNode:
    """Search-tree node: a sub-box of the root box and the cuts valid on it."""

    id: int
    depth: int
    box: Box
    dual: float = math.inf
    cuts: CutPool = field(default_factory=CutPool)
    parent: int | None = None


@dataclass(slots=True)
class SolveResult:
    """
    Outcome of a search. Bounds are in the model's own sense: for a
    maximization `primal <= dual`, for a minimization `dual <= primal`.
    """

    status: SolveStatus
    primal: float | None
    dual: float
    gap: float | None
    x: tuple[float, ...] | None
    explored: int
    remaining: int
    time: float
    root_dual: float

    @property
    def absolute_gap(self) -> float | None:
        if self.primal is None:
            return None
        return abs(self.dual - self.primal)


def relative_gap(primal: float, dual: float) -> float:
    return max(0.0, dual - primal) / max(abs(primal), GAP_FLOOR)


def _linear_row(c: ConstraintSpec, n: int) -> tuple[np.ndarray, float] | None:
    row = np.zeros(n)
    const = 0.0
    for t in c.terms:
        if (f := linear_form(t.expr)) is None:
            return None
        for i, v in f[0].items():
            row[i] += v
        const += f[1]
    return row, c.rhs - const


class Solver:
    """
    Spatial branch and bound over an outer approximation built from the
    linear constraints and decision-diagram cuts for the nonlinear ones.
    Works in maximization form throughout.
    """

    def __init__(self, m: Model, cfg: SolverConfig | None = None) -> None:
        self.model = m
        self.cfg = cfg or SolverConfig()
        self.root = m.box
        self.n = m.dimension
        self.objective = np.array(m.objective, dtype=float)
        self.epigraph = m.epigraph.index if m.epigraph is not None else None

        rows: list[np.ndarray] = []
        rhs: list[float] = []
        self.nonlinear: list[int] = []
        for k, c in enumerate(m.constraints):
            if (lin := _linear_row(c, self.n)) is None:
                self.nonlinear.append(k)
            else:
                rows.append(lin[0])
                rhs.append(lin[1])
        self.rows = np.vstack(rows) if rows else np.zeros((0, self.n))
        self.rhs = np.array(rhs)

        domains = self.root.domains
        self.rules: dict[int, list[BoundRule]] = {
            k: [select_rule(t, domains) for t in m.constraints[k].terms] for k in self.nonlinear
        }
        logger.debug(
            f'linear={len(rhs)} nonlinear={len(self.nonlinear)} '
            f'rules={[r.kind.value for k in self.nonlinear for r in self.rules[k]]}'
        )

        self.primal = -math.inf
        self.incumbent: tuple[float, ...] | None = None
        self.next_id = 0

    def new_node(
        self, depth: int, box: Box, dual: float, cuts: CutPool, parent: int | None
    ) -> BnbNode:
        node = BnbNode(self.next_id, depth, box, dual, cuts, parent)
        self.next_id += 1
        return node

    def relax(self, box: Box, cuts: CutPool) -> tuple[LpStatus, np.ndarray | None, float]:
        """Solves the outer approximation over `box` with `cuts`."""
        a, b = cuts.rows(self.n)
        lp = LinearProgram.new(
            self.objective,
            np.vstack([self.rows, a]),
            np.concatenate([self.rhs, b]),
            None,
            box.lower,
            box.upper,
        )
        outcome = solve_lp(lp)
        if outcome.status is LpStatus.UNBOUNDED:
            err_msg = 'outer approximation is unbounded over a bounded box'
            raise LpError(err_msg)
        if outcome.status is LpStatus.INFEASIBLE or outcome.x is None:
            return LpStatus.INFEASIBLE, None, -math.inf
        return LpStatus.OPTIMAL, outcome.x, outcome.value + self.model.offset

    def tighten(self, box: Box) -> Box:
        """
        Narrows the epigraph variable to the enclosure of the objective
        over the rest of `box`, so its partitions shrink with the box.
        """
        if self.model.epigraph is None:
            return box
        z = self.model.epigraph.index
        try:
            r = enclose(self.model.epigraph.expr, box.domains)
        except ExpressionError:
            return box
        pad = EPIGRAPH_PAD * (1.0 + max(abs(r.lo), abs(r.hi)))
        lo = max(box.lower[z], r.lo - pad)
        hi = min(box.upper[z], r.hi + pad)
        if not lo <= hi or (lo, hi) == (box.lower[z], box.upper[z]):
            return box
        logger.debug(f'epigraph var={z} narrowed to [{lo:.6g}, {hi:.6g}]')
        return box.with_bounds(z, lo, hi)

    def diagram(self, k: int, box: Box) -> DecisionDiagram:
        c = self.model.constraints[k]
        partitions = make_partitions(box, self.cfg.partitions, c.variables)
        return build(
            c,
            partitions,
            self.cfg.width,
            self.cfg.merge,
            self.rules[k],
            box.integer,
            self.n,
        )

    def separate(self, d: DecisionDiagram, x: np.ndarray) -> CutPlane | None:
        if self.cfg.separation is Separation.EXACT:
            return separate_exact(d, x)
        cut = separate_subgradient(d, x, self.cfg.sg_iters, self.cfg.sg_step)
        if cut is None and self.cfg.exact_fallback:
            cut = separate_exact(d, x)
        return cut

    def check(self, x: Sequence[float], lift: bool = False) -> tuple[float, ...] | None:
        """
        Rounds near-integral components and re-evaluates every constraint.
        With `lift` the epigraph variable is first set to the objective
        value. Returns the checked point, or None when it is infeasible.
        """
        point = [float(v) for v in x]
        for i, intg in enumerate(self.root.integer):
            if intg:
                r = float(math.floor(point[i] + 0.5))
                if abs(point[i] - r) > self.cfg.feas_tol:
                    return None
                point[i] = r
        try:
            if lift and self.model.epigraph is not None:
                point[self.model.epigraph.index] = evaluate(self.model.epigraph.expr, point)
            if not self.root.contains(point, self.cfg.feas_tol):
                return None
            for c in self.model.constraints:
                if c.violation(point) > self.cfg.feas_tol:
                    return None
        except ExpressionError:
            return None
        return tuple(point)

    def offer(self, point: tuple[float, ...], source: str) -> bool:
        value = self.model.objective_value(point)
        if value <= self.primal:
            return False
        self.primal, self.incumbent = value, point
        logger.info(f'incumbent={self.model.report_value(value):.6g} source={source}')
        return True

    def rounded(self, x: Sequence[float]) -> list[float]:
        return [
            float(math.floor(v + 0.5)) if intg else float(v)
            for v, intg in zip(x, self.root.integer)
        ]

    def heuristic(self, box: Box, x: np.ndarray) -> None:
        """Offers the rounded LP point, the box centre and a bisection point."""
        for source, candidate in (('lp', x), ('center', np.array(box.center()))):
            if (point := self.check(self.rounded(candidate), lift=True)) is not None:
                self.offer(point, source)
        if self.incumbent is None:
            return
        # largest feasible step from the incumbent towards the LP point
        base = np.array(self.incumbent)
        lo, hi = 0.0, 1.0
        found: tuple[float, ...] | None = None
        for _ in range(BISECTION_STEPS):
            t = 0.5 * (lo + hi)
            if (point := self.check(self.rounded(base + t * (x - base)), lift=True)) is not None:
                lo, found = t, point
            else:
                hi = t
        if found is not None:
            self.offer(found, 'bisection')

    def prune(
        self,
        node: BnbNode,
        incumbent: float,
        status: LpStatus,
        x: Sequence[float] | None,
        dd_empty: bool = False,
    ) -> Prune:
        """Decides whether `node` can be closed, and why."""
        if status is LpStatus.INFEASIBLE or dd_empty or x is None:
            return Prune.INFEASIBLE
        if node.dual <= incumbent + PRUNE_TOL:
            return Prune.BOUND
        if self.check(x) is not None:
            return Prune.FEASIBLE
        return Prune.KEEP

    def branch(self, node: BnbNode, x: Sequence[float]) -> tuple[BnbNode, BnbNode]:
        """
        Splits the variable whose LP value lies closest to its domain
        centre, relative to the domain width; ties go to the smaller index.
        """
        box = node.box
        best: tuple[float, int] | None = None
        for i in range(self.n):
            if i == self.epigraph:
                continue
            w = box.width(i)
            if w < (1.0 if box.integer[i] else MIN_WIDTH) or w <= 0:
                continue
            score = abs(x[i] - 0.5 * (box.lower[i] + box.upper[i])) / w
            if best is None or score < best[0]:
                best = (score, i)
        if best is None:
            err_msg = f'node {node.id} has no variable left to branch on'
            raise AtomicBoxError(err_msg)

        i = best[1]
        lo, hi = box.lower[i], box.upper[i]
        w = min(max(x[i], lo + CLAMP * (hi - lo)), hi - CLAMP * (hi - lo))
        if box.integer[i]:
            split = min(max(float(math.floor(w)), lo), hi - 1.0)
            left, right = box.with_bounds(i, lo, split), box.with_bounds(i, split + 1.0, hi)
        else:
            left, right = box.with_bounds(i, lo, w), box.with_bounds(i, w, hi)
        logger.debug(f'node={node.id} branch var={i} at={w:.6g}')
        return (
            self.new_node(node.depth + 1, left, node.dual, node.cuts.copy(), node.id),
            self.new_node(node.depth + 1, right, node.dual, node.cuts.copy(), node.id),
        )

    def process(self, node: BnbNode) -> list[BnbNode]:
        """Runs the cut loop at `node` and returns its children, if any."""
        parent_dual = node.dual
        node.box = self.tighten(node.box)
        diagrams: dict[int, DecisionDiagram] = {}
        added = 0
        dd_empty = False
        rounds = 0
        while True:
            status, x, value = self.relax(node.box, node.cuts)
            if status is LpStatus.INFEASIBLE or x is None:
                break
            node.dual = min(value, parent_dual)
            if node.dual <= self.primal + PRUNE_TOL or rounds >= self.cfg.cut_rounds:
                break
            violated = [
                k
                for k in self.nonlinear
                if self._violation(k, x) > self.cfg.feas_tol
            ]
            if not violated:
                break
            fresh = 0
            for k in violated:
                if k not in diagrams:
                    diagrams[k] = self.diagram(k, node.box)
                d = diagrams[k]
                if d.empty:
                    logger.debug(f'node={node.id} constraint={k} diagram is empty')
                    dd_empty = True
                    break
                cut = self.separate(d, x)
                if cut is not None:
                    name = self.model.constraints[k].name or str(k)
                    tagged = dataclasses.replace(cut, source=f'{name}:{node.id}:{cut.source}')
                    fresh += node.cuts.add(tagged)
            if dd_empty:
                break
            rounds += 1
            added += fresh
            if not fresh:
                break

        decision = self.prune(node, self.primal, status, x, dd_empty)
        children: list[BnbNode] = []
        match decision:
            case Prune.FEASIBLE:
                assert x is not None
                point = self.check(x)
                assert point is not None
                self.offer(point, 'relaxation')
            case Prune.KEEP:
                assert x is not None
                self.heuristic(node.box, x)
                if node.dual <= self.primal + PRUNE_TOL:
                    decision = Prune.BOUND
                else:
                    try:
                        children = list(self.branch(node, x))
                    except AtomicBoxError:
                        point = self.check(node.box.center(), lift=True)
                        if point is not None:
                            self.offer(point, 'atomic')
                        decision = Prune.FEASIBLE if point is not None else Prune.INFEASIBLE
        if status is LpStatus.INFEASIBLE or dd_empty:
            node.dual = -math.inf

        lp = f'{value:.6g}' if x is not None else '-'
        action = 'branch' if children else f'prune:{decision.value}'
        logger.info(
            f'node={node.id} depth={node.depth} lp={lp} cuts={added} rounds={rounds} '
            f'action={action}'
        )
        return children

    def _violation(self, k: int, x: np.ndarray) -> float:
        try:
            return self.model.constraints[k].violation(x)
        except ExpressionError:
            return math.inf

    def solve(self) -> SolveResult:
        start = time.perf_counter()
        root = self.new_node(0, self.root, math.inf, CutPool(), None)
        heap: list[tuple[float, int, BnbNode]] = [(-root.dual, root.id, root)]
        explored = 0
        root_dual = math.inf
        status: SolveStatus | None = None

        while heap:
            if explored:
                if time.perf_counter() - start > self.cfg.time_limit:
                    status = SolveStatus.TIME_LIMIT
                    break
                if self.cfg.node_limit is not None and explored >= self.cfg.node_limit:
                    status = SolveStatus.NODE_LIMIT
                    break
                bound = -heap[0][0]
                if self.incumbent is not None and relative_gap(self.primal, bound) <= self.cfg.gap:
                    status = SolveStatus.OPTIMAL
                    break

            _, _, node = heapq.heappop(heap)
            if node.dual <= self.primal + PRUNE_TOL:
                logger.debug(f'node={node.id} closed by bound before processing')
                continue
            explored += 1
            children = self.process(node)
            if node.id == root.id:
                root_dual = node.dual
            for child in children:
                heapq.heappush(heap, (-child.dual, child.id, child))

        if status is None:
            status = SolveStatus.OPTIMAL if self.incumbent is not None else SolveStatus.INFEASIBLE

        open_bound = max((node.dual for *_, node in heap), default=-math.inf)
        if self.incumbent is None and heap:
            dual = open_bound
        elif self.incumbent is None:
            dual = -math.inf
        else:
            dual = max(self.primal, open_bound)
        if not math.isfinite(dual) and status in (SolveStatus.TIME_LIMIT, SolveStatus.NODE_LIMIT):
            dual = root_dual

        gap = relative_gap(self.primal, dual) if self.incumbent is not None else None
        m = self.model
        result = SolveResult(
            status=status,
            primal=m.report_value(self.primal) if self.incumbent is not None else None,
            dual=m.report_value(dual),
            gap=gap,
            x=self.incumbent,
            explored=explored,
            remaining=len(heap),
            time=time.perf_counter() - start,
            root_dual=m.report_value(root_dual),
        )
        logger.info(
            f'status={status.value} primal={result.primal} dual={result.dual:.6g} '
            f'explored={explored} remaining={len(heap)}'
        )
        return result


def solve(m: Model, cfg: SolverConfig | None = None) -> SolveResult:
    """Solves `m` to the gap tolerance of `cfg`."""
    return Solver(m, cfg).solve()
