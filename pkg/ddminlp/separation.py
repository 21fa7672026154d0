from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from numpy.typing import ArrayLike

from ddminlp.dd import Arc
from ddminlp.dd import DecisionDiagram
from ddminlp.lp import LinearProgram
from ddminlp.lp import LpStatus
from ddminlp.lp import Sense
from ddminlp.lp import solve_lp

logger = logging.getLogger(__name__)

VIOLATION_TOL = 1e-7
TIE_TOL = 1e-12


class SeparationError(Exception): ...


@dataclass(frozen=True, slots=True, eq=False)
class CutPlane:
    """Valid inequality `coefficients . x <= rhs` in the full variable space."""

    coefficients: np.ndarray
    rhs: float
    violation: float = 0.0
    source: str = ''

    def value(self, x: ArrayLike) -> float:
        return float(self.coefficients @ np.asarray(x, dtype=float))

    def violated_by(self, x: ArrayLike, tol: float = VIOLATION_TOL) -> bool:
        return self.value(x) > self.rhs + tol

    def normalized(self) -> CutPlane:
        norm = float(np.linalg.norm(self.coefficients))
        if norm == 0:
            return self
        return CutPlane(
            self.coefficients / norm, self.rhs / norm, self.violation / norm, self.source
        )


def _support(d: DecisionDiagram, v: ArrayLike) -> np.ndarray:
    """Restricts a full-space vector to the diagram's variables."""
    arr = np.asarray(v, dtype=float)
    if arr.size == len(d.variables):
        return arr
    if arr.size != d.dimension:
        err_msg = f'vector of size {arr.size} fits neither the diagram nor the model'
        raise SeparationError(err_msg)
    return arr[list(d.variables)]


def _lift(d: DecisionDiagram, gamma: np.ndarray) -> np.ndarray:
    full = np.zeros(d.dimension)
    full[list(d.variables)] = gamma
    return full


@dataclass(slots=True)
class FlowPolytope:
    """
    Network-flow description of `conv(Sol(d))`: unit flow from root to
    terminal whose label-weighted arc sums per layer equal `x`.
    """

    diagram: DecisionDiagram
    arcs: list[tuple[int, Arc]]
    balance: np.ndarray
    supply: np.ndarray
    coupling: np.ndarray

    def contains(self, x: ArrayLike) -> bool:
        """LP feasibility check of `x` against the flow polytope."""
        target = _support(self.diagram, x)
        rows = np.vstack([self.balance, self.coupling])
        rhs = np.concatenate([self.supply, target])
        lp = LinearProgram.new(
            np.zeros(len(self.arcs)),
            rows,
            rhs,
            [Sense.EQ] * rhs.size,
            lower=np.zeros(len(self.arcs)),
        )
        return solve_lp(lp).status is LpStatus.OPTIMAL


def flow_polytope(d: DecisionDiagram) -> FlowPolytope:
    """Builds balance and coupling rows, columns in layer-major arc order."""
    terminal = d.terminal
    if terminal is None:
        err_msg = 'no flow polytope for an empty diagram'
        raise SeparationError(err_msg)
    nodes = d.nodes()
    index = {u.id: k for k, u in enumerate(nodes)}
    arcs = [(p, a) for p, layer in enumerate(d.arcs) for a in layer]
    balance = np.zeros((len(nodes), len(arcs)))
    coupling = np.zeros((len(d.variables), len(arcs)))
    for col, (p, a) in enumerate(arcs):
        balance[index[a.tail], col] += 1.0
        balance[index[a.head], col] -= 1.0
        coupling[p, col] = a.label
    supply = np.zeros(len(nodes))
    supply[index[d.root.id]] = 1.0
    supply[index[terminal.id]] = -1.0
    return FlowPolytope(d, arcs, balance, supply, coupling)


def longest_path(d: DecisionDiagram, gamma: ArrayLike) -> tuple[np.ndarray, float]:
    """
    Root-terminal path maximizing `gamma . labels`, by dynamic programming
    over the layers. Ties prefer the smaller label, then the smaller head id.
    Returns the path's labels in diagram variable order and its value.
    """
    if d.empty:
        err_msg = 'longest path on an empty diagram'
        raise SeparationError(err_msg)
    weights = _support(d, gamma)
    terminal = d.terminal
    assert terminal is not None
    best: dict[int, float] = {terminal.id: 0.0}
    choice: dict[int, Arc] = {}
    for p in range(len(d.arcs) - 1, -1, -1):
        for a in d.arcs[p]:
            if a.head not in best:
                continue
            value = a.label * weights[p] + best[a.head]
            current = choice.get(a.tail)
            if current is None:
                better = True
            else:
                incumbent = best[a.tail]
                better = value > incumbent + TIE_TOL or (
                    value >= incumbent - TIE_TOL
                    and (a.label, a.head) < (current.label, current.head)
                )
            if better:
                best[a.tail] = value
                choice[a.tail] = a

    labels = np.zeros(len(d.variables))
    node = d.root.id
    for p in range(len(d.arcs)):
        a = choice[node]
        labels[p] = a.label
        node = a.head
    return labels, best[d.root.id]


def separate_exact(d: DecisionDiagram, x: ArrayLike) -> CutPlane | None:
    """
    Solves the cut-generating LP over the flow polytope's dual with
    `|gamma|_inf <= 1`. Returns the most violated cut, or None when `x`
    lies in `conv(Sol(d))`.
    """
    if d.empty:
        err_msg = 'cannot separate over an empty diagram'
        raise SeparationError(err_msg)
    point = _support(d, x)
    nodes = d.nodes()
    index = {u.id: k for k, u in enumerate(nodes)}
    nn, nl = len(nodes), len(d.variables)
    terminal = d.terminal
    assert terminal is not None

    objective = np.zeros(nn + nl)
    objective[index[terminal.id]] = -1.0
    objective[nn:] = point
    arcs = [(p, a) for p, layer in enumerate(d.arcs) for a in layer]
    rows = np.zeros((len(arcs), nn + nl))
    for r, (p, a) in enumerate(arcs):
        rows[r, index[a.tail]] += 1.0
        rows[r, index[a.head]] -= 1.0
        rows[r, nn + p] += a.label

    # potentials never need to exceed the largest path weight
    reach = 1.0 + sum(max((abs(a.label) for a in layer), default=0.0) for layer in d.arcs)
    lower = np.concatenate([np.full(nn, -reach), -np.ones(nl)])
    upper = np.concatenate([np.full(nn, reach), np.ones(nl)])
    lower[index[d.root.id]] = upper[index[d.root.id]] = 0.0

    outcome = solve_lp(LinearProgram.new(objective, rows, np.zeros(len(arcs)), None, lower, upper))
    if outcome.status is not LpStatus.OPTIMAL or outcome.x is None:
        err_msg = f'cut-generating LP ended {outcome.status.value}'
        raise SeparationError(err_msg)
    if outcome.value <= VIOLATION_TOL:
        return None

    gamma = outcome.x[nn:]
    _, rhs = longest_path(d, gamma)
    violation = float(gamma @ point) - rhs
    if violation <= VIOLATION_TOL:
        return None
    logger.debug(f'exact cut violation={violation:.3e} lp={outcome.value:.3e}')
    return CutPlane(_lift(d, gamma), rhs, violation, 'exact')


def _affine_minimizer(corral: np.ndarray) -> np.ndarray:
    """Weights, summing to one, of the point of smallest norm in the affine hull of the rows."""
    k = corral.shape[0]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = corral @ corral.T
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]


def _nearest_point_cut(
    d: DecisionDiagram, point: np.ndarray, start: np.ndarray, iters: int
) -> tuple[np.ndarray, float, float] | None:
    """
    Minimum-norm-point iterations for the projection of `point` onto
    `conv(Sol(d))`, longest paths serving as the linear oracle. Vertices are
    kept shifted by `point`, so the nearest hull point is `point + y`.
    Returns the most violated unit-norm cut `(gamma, rhs, violation)` met.
    """
    corral = [start - point]
    weights = np.ones(1)
    y = corral[0]
    best: tuple[np.ndarray, float, float] | None = None
    for _ in range(iters):
        norm = float(np.linalg.norm(y))
        if norm <= VIOLATION_TOL:
            break
        gamma = -y / norm
        path, value = longest_path(d, gamma)
        violation = float(gamma @ point) - value
        if best is None or violation > best[2]:
            best = (gamma, value, violation)
        # y is the projection once no vertex lies beyond it along gamma
        if violation >= norm - TIE_TOL * (1.0 + norm):
            break
        v = path - point
        if any(np.allclose(v, s, rtol=0.0, atol=TIE_TOL) for s in corral):
            break
        corral.append(v)
        weights = np.append(weights, 0.0)
        for _ in range(len(corral)):
            mu = _affine_minimizer(np.vstack(corral))
            if np.all(mu > TIE_TOL):
                weights = mu
                break
            # step towards mu until a weight reaches zero, then drop it
            low = mu <= TIE_TOL
            room = weights[low] - mu[low]
            ratios = np.divide(weights[low], room, out=np.zeros_like(room), where=room > 0)
            theta = min(1.0, float(ratios.min()))
            weights = weights + theta * (mu - weights)
            keep = weights > TIE_TOL
            corral = [s for s, k in zip(corral, keep) if k]
            weights = weights[keep] / weights[keep].sum()
        y = weights @ np.vstack(corral)
    return best


def separate_subgradient(
    d: DecisionDiagram, x: ArrayLike, iters: int = 50, step: float = 1.0
) -> CutPlane | None:
    """
    Projected subgradient ascent on the separation problem over the unit
    ball, one longest-path call per iteration. Returns the best cut seen.

    When the ascent finds no violated cut, the longest paths it visited seed
    minimum-norm-point iterations (at most `iters` oracle calls) that settle
    whether `x` lies in the hull. Returns None when no cut is violated.
    """
    if d.empty:
        err_msg = 'cannot separate over an empty diagram'
        raise SeparationError(err_msg)
    point = _support(d, x)
    gamma = np.zeros(len(d.variables))
    best_gap = 0.0
    best: tuple[np.ndarray, float] | None = None
    path = point
    for _ in range(iters):
        path, value = longest_path(d, gamma)
        diff = point - path
        gap = float(gamma @ diff)
        if gap > best_gap:
            best_gap, best = gap, (gamma.copy(), value)
        phi = gamma + step * diff
        norm = float(np.linalg.norm(phi))
        gamma = phi / norm if norm > 1.0 else phi

    if best is not None and best_gap > VIOLATION_TOL:
        coefficients, rhs = best
        logger.debug(f'subgradient cut violation={best_gap:.3e}')
        return CutPlane(_lift(d, coefficients), rhs, best_gap, 'subgradient')

    found = _nearest_point_cut(d, point, path, iters)
    if found is None or found[2] <= VIOLATION_TOL:
        return None
    coefficients, rhs, violation = found
    logger.debug(f'min-norm cut violation={violation:.3e}')
    return CutPlane(_lift(d, coefficients), rhs, violation, 'min-norm')


@dataclass(slots=True)
class CutPool:
    """Cuts collected at one node, deduplicated by direction and offset."""

    cuts: list[CutPlane] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cuts)

    def add(self, cut: CutPlane, tol: float = 1e-6) -> bool:
        new = cut.normalized()
        for k, old in enumerate(self.cuts):
            ref = old.normalized()
            if float(new.coefficients @ ref.coefficients) > 1.0 - tol:
                if new.rhs < ref.rhs - tol:
                    self.cuts[k] = cut
                    return True
                return False
        self.cuts.append(cut)
        return True

    def extend(self, cuts: Sequence[CutPlane]) -> int:
        return sum(self.add(c) for c in cuts)

    def copy(self) -> CutPool:
        return CutPool(list(self.cuts))

    def rows(self, dimension: int) -> tuple[np.ndarray, np.ndarray]:
        if not self.cuts:
            return np.zeros((0, dimension)), np.zeros(0)
        a = np.vstack([c.coefficients for c in self.cuts])
        b = np.array([c.rhs for c in self.cuts])
        return a, b
