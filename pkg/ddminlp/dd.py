from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from enum import Enum

from ddminlp.bounds import BoundRule
from ddminlp.bounds import lower_bound
from ddminlp.bounds import select_rule
from ddminlp.interval import Interval
from ddminlp.model import Box
from ddminlp.model import ConstraintSpec

logger = logging.getLogger(__name__)

STATE_TOL = 1e-9
TERMINAL_TOL = 1e-9
DEFAULT_PATH_CAP = 100_000

# variable position -> ordered cells covering its domain
PartitionScheme = dict[int, tuple[Interval, ...]]


class DDError(Exception): ...


class MergePolicy(Enum):
    F = 'f'
    G = 'g'


@dataclass(slots=True)
class DDNode:
    """
    Diagram node. `domains` holds the relative sub-domains of the assigned
    variables some later term still depends on.
    """

    id: int
    state: float
    domains: dict[int, Interval] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Arc:
    tail: int
    head: int
    label: float


@dataclass(slots=True)
class DecisionDiagram:
    """
    Layered DAG relaxing one constraint over a box.

    Arc layer `p` assigns variable `variables[p]`; node layer 0 holds the
    root and the last node layer the terminal, or nothing when no
    root-terminal path survived.
    """

    variables: tuple[int, ...]
    dimension: int
    rhs: float
    layers: list[list[DDNode]]
    arcs: list[list[Arc]]

    @property
    def root(self) -> DDNode:
        return self.layers[0][0]

    @property
    def terminal(self) -> DDNode | None:
        return self.layers[-1][0] if self.layers[-1] else None

    @property
    def empty(self) -> bool:
        return self.terminal is None

    @property
    def node_count(self) -> int:
        return sum(len(layer) for layer in self.layers)

    @property
    def arc_count(self) -> int:
        return sum(len(layer) for layer in self.arcs)

    @property
    def width(self) -> int:
        return max((len(layer) for layer in self.layers), default=0)

    def nodes(self) -> list[DDNode]:
        return [u for layer in self.layers for u in layer]


def make_partitions(box: Box, count: int, indices: Sequence[int] | None = None) -> PartitionScheme:
    """
    Splits each domain into at most `count` cells: equal lengths for
    continuous variables, near-equal integer blocks for integer ones.
    """
    if count < 1:
        err_msg = f'partition count must be positive, got {count}'
        raise DDError(err_msg)
    scheme: PartitionScheme = {}
    for i in range(box.dimension) if indices is None else indices:
        lo, hi = box.lower[i], box.upper[i]
        if lo == hi:
            scheme[i] = (Interval(lo, hi),)
        elif box.integer[i]:
            scheme[i] = _integer_blocks(int(lo), int(hi), count)
        else:
            h = (hi - lo) / count
            cuts = [lo + k * h for k in range(count)] + [hi]
            scheme[i] = tuple(Interval(a, b) for a, b in zip(cuts, cuts[1:]))
    return scheme


def _integer_blocks(lo: int, hi: int, count: int) -> tuple[Interval, ...]:
    size = hi - lo + 1
    if size <= count:
        return tuple(Interval(float(v), float(v)) for v in range(lo, hi + 1))
    base, extra = divmod(size, count)
    blocks: list[Interval] = []
    start = lo
    for k in range(count):
        end = start + base + (1 if k < extra else 0) - 1
        blocks.append(Interval(float(start), float(end)))
        start = end + 1
    return tuple(blocks)


def _hull(nodes: Sequence[DDNode]) -> dict[int, Interval]:
    out = dict(nodes[0].domains)
    for u in nodes[1:]:
        for i, r in u.domains.items():
            out[i] = out[i].hull(r) if i in out else r
    return out


def _merged(nodes: Sequence[DDNode]) -> DDNode:
    low = min(nodes, key=lambda u: (u.state, u.id))
    return DDNode(low.id, low.state, _hull(nodes))


def merge_f(layer: Sequence[DDNode], width: int) -> tuple[list[DDNode], dict[int, int]]:
    """
    Keeps the `width - 1` nodes with the largest states and merges the rest
    into one node carrying their smallest state.
    """
    if len(layer) <= width:
        return list(layer), {}
    ordered = sorted(layer, key=lambda u: (-u.state, u.id))
    keep, rest = ordered[: width - 1], ordered[width - 1 :]
    merged = _merged(rest)
    remap = {u.id: merged.id for u in rest}
    return sorted([*keep, merged], key=lambda u: (u.state, u.id)), remap


def merge_g(layer: Sequence[DDNode], width: int) -> tuple[list[DDNode], dict[int, int]]:
    """
    Buckets states into `width` equal-length intervals between the layer's
    smallest and largest state and merges each bucket. A state on a bucket
    boundary goes to the lower bucket.
    """
    if len(layer) <= width:
        return list(layer), {}
    ordered = sorted(layer, key=lambda u: (u.state, u.id))
    smallest, largest = ordered[0].state, ordered[-1].state
    step = (largest - smallest) / width
    buckets: dict[int, list[DDNode]] = {}
    for u in ordered:
        if step <= 0:
            k = 0
        else:
            k = max(0, math.ceil((u.state - smallest) / step - 1e-12) - 1)
            k = min(k, width - 1)
        buckets.setdefault(k, []).append(u)
    nodes: list[DDNode] = []
    remap: dict[int, int] = {}
    for k in sorted(buckets):
        group = buckets[k]
        merged = _merged(group) if len(group) > 1 else group[0]
        nodes.append(merged)
        remap.update({u.id: merged.id for u in group if u.id != merged.id})
    return nodes, remap


MERGERS = {MergePolicy.F: merge_f, MergePolicy.G: merge_g}


class _Builder:
    """Top-down compilation of one constraint into a diagram."""

    def __init__(
        self,
        c: ConstraintSpec,
        partitions: PartitionScheme,
        width: int | None,
        policy: MergePolicy,
        rules: Sequence[BoundRule] | None,
        integer: Sequence[bool] | None,
        dimension: int,
    ) -> None:
        self.c = c
        self.order = c.variables
        self.partitions = partitions
        self.width = width
        self.merge = MERGERS[policy]
        self.dimension = dimension
        position = {v: p for p, v in enumerate(self.order)}
        missing = [v for v in self.order if v not in partitions]
        if missing:
            err_msg = f'no partition for variables {missing}'
            raise DDError(err_msg)

        hull_box = {i: Interval(cells[0].lo, cells[-1].hi) for i, cells in partitions.items()}
        if rules is None:
            rules = [select_rule(t, hull_box) for t in c.terms]
        self.rules = list(rules)
        flags = tuple(integer) if integer is not None else ()
        self.flags = [
            tuple(i < len(flags) and bool(flags[i]) for i in t.variables) for t in c.terms
        ]

        self.by_layer: list[list[int]] = [[] for _ in self.order]
        for k, t in enumerate(c.terms):
            self.by_layer[position[t.hmax]].append(k)

        # after layer p, the assigned variables some later term still reads
        self.tracked: list[tuple[int, ...]] = []
        for p in range(len(self.order)):
            keep = {
                v
                for t in c.terms
                if position[t.hmax] > p
                for v in t.variables
                if position[v] <= p
            }
            self.tracked.append(tuple(sorted(keep)))

        self.next_id = 1
        self.cache: dict[tuple, float] = {}

    def new_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    def eta(self, k: int, j: int, var: int, cell: Interval, u: DDNode) -> float:
        t = self.c.terms[k]
        others = tuple(u.domains[v] for v in t.variables if v != var)
        key = (k, j, others)
        if (hit := self.cache.get(key)) is not None:
            return hit
        domains = {v: u.domains[v] for v in t.variables if v != var}
        domains[var] = cell
        value = lower_bound(t, domains, self.rules[k], self.flags[k])
        self.cache[key] = value
        return value

    def build(self) -> DecisionDiagram:
        root = DDNode(0, 0.0)
        layers: list[list[DDNode]] = [[root]]
        arcs: list[list[Arc]] = []
        last = len(self.order) - 1

        for p, var in enumerate(self.order):
            cells = self.partitions[var]
            candidates: list[tuple[float, int, int, DDNode, Interval]] = []
            for u in layers[-1]:
                for j, cell in enumerate(cells):
                    eta = math.fsum(self.eta(k, j, var, cell, u) for k in self.by_layer[p])
                    candidates.append((u.state + eta, u.id, j, u, cell))

            if p == last:
                layer, layer_arcs = self.close(candidates)
            else:
                layer, layer_arcs = self.expand(p, var, candidates)
            layers.append(layer)
            arcs.append(layer_arcs)
            logger.debug(f'layer={p + 1} var={var} nodes={len(layer)} arcs={len(layer_arcs)}')

        d = DecisionDiagram(self.order, self.dimension, self.c.rhs, layers, arcs)
        return prune_unreachable(reduce_parallel_arcs(d))

    def close(self, candidates: list) -> tuple[list[DDNode], list[Arc]]:
        passing = [c for c in candidates if c[0] <= self.c.rhs + TERMINAL_TOL]
        if not passing:
            return [], []
        terminal = DDNode(self.new_id(), max(c[0] for c in passing))
        out: list[Arc] = []
        for _, _, _, u, cell in passing:
            out.extend(_arcs(u.id, terminal.id, cell))
        return [terminal], out

    def expand(self, p: int, var: int, candidates: list) -> tuple[list[DDNode], list[Arc]]:
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        groups: list[list] = []
        for cand in candidates:
            if groups and cand[0] - groups[-1][0][0] <= STATE_TOL:
                groups[-1].append(cand)
            else:
                groups.append([cand])

        layer: list[DDNode] = []
        out: list[Arc] = []
        tracked = self.tracked[p]
        for group in groups:
            domains: dict[int, Interval] = {}
            for v in tracked:
                if v == var:
                    parts = [cell for *_, cell in group]
                else:
                    parts = [u.domains[v] for *_, u, _ in group]
                domains[v] = Interval(min(r.lo for r in parts), max(r.hi for r in parts))
            node = DDNode(self.new_id(), group[0][0], domains)
            layer.append(node)
            for _, _, _, u, cell in group:
                out.extend(_arcs(u.id, node.id, cell))

        if self.width is not None and len(layer) > self.width:
            before = len(layer)
            layer, remap = self.merge(layer, self.width)
            out = [Arc(a.tail, remap.get(a.head, a.head), a.label) for a in out]
            logger.debug(f'merged layer {p + 1}: {before} -> {len(layer)} nodes')
        return layer, out


def _arcs(tail: int, head: int, cell: Interval) -> list[Arc]:
    if cell.lo == cell.hi:
        return [Arc(tail, head, cell.lo)]
    return [Arc(tail, head, cell.lo), Arc(tail, head, cell.hi)]


def build_separable(
    c: ConstraintSpec,
    partitions: PartitionScheme,
    width: int | None = None,
    policy: MergePolicy = MergePolicy.G,
    rules: Sequence[BoundRule] | None = None,
    integer: Sequence[bool] | None = None,
    dimension: int | None = None,
) -> DecisionDiagram:
    """Compiles a constraint whose terms are all univariate."""
    if not c.separable:
        err_msg = 'constraint has multivariate terms, use build_nonseparable'
        raise DDError(err_msg)
    return build_nonseparable(c, partitions, width, policy, rules, integer, dimension)


def build_nonseparable(
    c: ConstraintSpec,
    partitions: PartitionScheme,
    width: int | None = None,
    policy: MergePolicy = MergePolicy.G,
    rules: Sequence[BoundRule] | None = None,
    integer: Sequence[bool] | None = None,
    dimension: int | None = None,
) -> DecisionDiagram:
    """
    Compiles a constraint into a relaxed diagram whose solution set contains
    every feasible point of the partitioned box.

    `width` caps the nodes per layer (None for no cap), `rules` fixes the
    bound rule per term and `integer` flags variables by position.
    """
    if not c.terms:
        err_msg = 'constraint has no terms'
        raise DDError(err_msg)
    n = dimension if dimension is not None else max(c.variables) + 1
    return _Builder(c, partitions, width, policy, rules, integer, n).build()


def build(
    c: ConstraintSpec,
    partitions: PartitionScheme,
    width: int | None = None,
    policy: MergePolicy = MergePolicy.G,
    rules: Sequence[BoundRule] | None = None,
    integer: Sequence[bool] | None = None,
    dimension: int | None = None,
) -> DecisionDiagram:
    if c.separable:
        return build_separable(c, partitions, width, policy, rules, integer, dimension)
    return build_nonseparable(c, partitions, width, policy, rules, integer, dimension)


def reduce_parallel_arcs(d: DecisionDiagram) -> DecisionDiagram:
    """Keeps only the smallest and largest label between each pair of nodes."""
    for p, layer in enumerate(d.arcs):
        spans: dict[tuple[int, int], list[float]] = {}
        for a in layer:
            span = spans.setdefault((a.tail, a.head), [a.label, a.label])
            span[0] = min(span[0], a.label)
            span[1] = max(span[1], a.label)
        reduced: list[Arc] = []
        for (tail, head), (lo, hi) in spans.items():
            reduced.append(Arc(tail, head, lo))
            if hi != lo:
                reduced.append(Arc(tail, head, hi))
        d.arcs[p] = reduced
    return d


def prune_unreachable(d: DecisionDiagram) -> DecisionDiagram:
    """Removes nodes and arcs that lie on no root-terminal path."""
    forward = {d.root.id}
    for layer in d.arcs:
        forward |= {a.head for a in layer if a.tail in forward}
    backward = {u.id for u in d.layers[-1]}
    for layer in reversed(d.arcs):
        backward |= {a.tail for a in layer if a.head in backward}
    alive = forward & backward

    if d.root.id not in alive:
        logger.debug('diagram has no root-terminal path')
        d.layers = [[d.root]] + [[] for _ in d.layers[1:]]
        d.arcs = [[] for _ in d.arcs]
        return d

    d.layers = [[u for u in layer if u.id in alive] for layer in d.layers]
    d.arcs = [[a for a in layer if a.tail in alive and a.head in alive] for layer in d.arcs]
    return d


def path_count(d: DecisionDiagram) -> int:
    if d.empty:
        return 0
    count = {d.root.id: 1}
    for layer in d.arcs:
        for a in layer:
            count[a.head] = count.get(a.head, 0) + count.get(a.tail, 0)
    terminal = d.terminal
    assert terminal is not None
    return count.get(terminal.id, 0)


def enumerate_solutions(d: DecisionDiagram, cap: int = DEFAULT_PATH_CAP) -> list[tuple[float, ...]]:
    """
    Distinct label vectors of root-terminal paths, in diagram variable order.
    Refuses diagrams with more than `cap` paths.
    """
    total = path_count(d)
    if total > cap:
        err_msg = f'diagram has {total} paths, more than the cap of {cap}'
        raise DDError(err_msg)
    if total == 0:
        return []
    outgoing: list[dict[int, list[Arc]]] = []
    for layer in d.arcs:
        table: dict[int, list[Arc]] = {}
        for a in layer:
            table.setdefault(a.tail, []).append(a)
        outgoing.append(table)

    found: set[tuple[float, ...]] = set()
    stack: list[tuple[int, int, tuple[float, ...]]] = [(0, d.root.id, ())]
    while stack:
        p, node, labels = stack.pop()
        if p == len(d.arcs):
            found.add(labels)
            continue
        for a in outgoing[p].get(node, []):
            stack.append((p + 1, a.head, (*labels, a.label)))
    return sorted(found)


def dump(d: DecisionDiagram, names: Sequence[str] | None = None) -> str:
    """Text rendering of the diagram: one line per node and per arc."""

    def label(v: int) -> str:
        return names[v] if names is not None else f'x{v}'

    lines = [
        f'dd vars={",".join(label(v) for v in d.variables)} rhs={d.rhs:g} '
        f'nodes={d.node_count} arcs={d.arc_count} empty={str(d.empty).lower()}'
    ]
    for p, layer in enumerate(d.layers):
        for u in layer:
            doms = ' '.join(f'{label(v)}={r}' for v, r in sorted(u.domains.items()))
            lines.append(f'node {p} {u.id} {u.state:.6g}' + (f' {doms}' if doms else ''))
    for p, layer in enumerate(d.arcs):
        for a in layer:
            lines.append(f'arc {p} {a.tail} {a.head} {a.label:.6g}')
    return '\n'.join(lines)
