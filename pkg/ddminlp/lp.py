from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
REFACTOR_EVERY = 64


class LpError(Exception): ...


class Sense(Enum):
    LE = '<='
    EQ = '=='


class LpStatus(Enum):
    OPTIMAL = 'optimal'
    INFEASIBLE = 'infeasible'
    UNBOUNDED = 'unbounded'


@dataclass(slots=True)
class LinearProgram:
    """
    Maximize `objective . x` subject to `rows x (<= | ==) rhs` and
    `lower <= x <= upper`. Bounds may be infinite.
    """

    objective: np.ndarray
    rows: np.ndarray
    rhs: np.ndarray
    senses: list[Sense]
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def new(
        cls,
        objective: ArrayLike,
        rows: ArrayLike | None = None,
        rhs: ArrayLike | None = None,
        senses: Sequence[Sense | str] | None = None,
        lower: ArrayLike | None = None,
        upper: ArrayLike | None = None,
    ) -> LinearProgram:
        c = np.asarray(objective, dtype=float)
        n = c.size
        a = np.zeros((0, n)) if rows is None else np.asarray(rows, dtype=float).reshape(-1, n)
        b = np.zeros(0) if rhs is None else np.asarray(rhs, dtype=float).reshape(-1)
        if a.shape[0] != b.size:
            err_msg = f'{a.shape[0]} rows but {b.size} right-hand sides'
            raise ValueError(err_msg)
        s = [Sense.LE] * b.size if senses is None else [Sense(x) for x in senses]
        lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        return cls(c, a, b, s, lo, hi)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape[0], self.objective.size


@dataclass(slots=True)
class LpOutcome:
    status: LpStatus
    x: np.ndarray | None = None
    value: float = -np.inf
    ray: np.ndarray | None = None
    iterations: int = 0


@dataclass(slots=True)
class _Tableau:
    """
    Working state of the bounded-variable simplex over `z >= 0`, `z <= cap`.

    `t` holds B^-1 A for the current basis, `beta` the values of the basic
    variables and `at_upper` which nonbasic variables sit at their cap.
    """

    a: np.ndarray
    b: np.ndarray
    cap: np.ndarray
    t: np.ndarray
    beta: np.ndarray
    basis: list[int]
    at_upper: np.ndarray
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    degenerate: int = 0
    bland: bool = False
    iterations: int = 0

    @property
    def m(self) -> int:
        return len(self.basis)

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.cap, 0.0)
        z[self.basis] = self.beta
        return z

    def reduced_costs(self, cost: np.ndarray) -> None:
        self.d = cost - cost[self.basis] @ self.t
        self.d[self.basis] = 0.0

    def refactor(self, cost: np.ndarray) -> None:
        if not self.m:
            self.reduced_costs(cost)
            return
        basis = self.a[:, self.basis]
        nonbasic = self.at_upper.copy()
        nonbasic[self.basis] = False
        rhs = self.b - self.a[:, nonbasic] @ self.cap[nonbasic]
        try:
            self.t = np.linalg.solve(basis, self.a)
            self.beta = np.linalg.solve(basis, rhs)
        except np.linalg.LinAlgError as exc:
            err_msg = f'singular basis after {self.iterations} iterations'
            raise LpError(err_msg) from exc
        self.reduced_costs(cost)

    def entering(self) -> tuple[int, float] | None:
        movable = self.cap > 0
        movable[self.basis] = False
        up = movable & ~self.at_upper & (self.d > OPT_TOL)
        down = movable & self.at_upper & (self.d < -OPT_TOL)
        eligible = np.flatnonzero(up | down)
        if eligible.size == 0:
            return None
        if self.bland:
            j = int(eligible[0])
        else:
            j = int(eligible[np.argmax(np.abs(self.d[eligible]))])
        return j, (1.0 if up[j] else -1.0)

    def ratio(self, j: int, direction: float) -> tuple[int | None, float]:
        """Returns the blocking row (None for a bound flip) and the step length."""
        alpha = direction * self.t[:, j]
        best_row: int | None = None
        best = self.cap[j]
        for i in np.flatnonzero(np.abs(alpha) > PIVOT_TOL):
            if alpha[i] > 0:
                step = max(self.beta[i], 0.0) / alpha[i]
            else:
                room = self.cap[self.basis[i]]
                if not np.isfinite(room):
                    continue
                step = max(room - self.beta[i], 0.0) / -alpha[i]
            if best_row is None:
                better = step <= best
            elif self.bland:
                better = step < best - 1e-12 or (
                    step <= best + 1e-12 and self.basis[i] < self.basis[best_row]
                )
            else:
                better = step < best - 1e-12 or (
                    step <= best + 1e-12 and abs(alpha[i]) > abs(alpha[best_row])
                )
            if better:
                best_row, best = int(i), step
        return best_row, best

    def flip(self, j: int, direction: float) -> None:
        self.beta -= direction * self.cap[j] * self.t[:, j]
        self.at_upper[j] = not self.at_upper[j]

    def pivot(self, r: int, j: int, step: float, direction: float) -> None:
        alpha = self.t[:, j].copy()
        start = self.cap[j] if self.at_upper[j] else 0.0
        leaving = self.basis[r]
        self.beta -= direction * step * alpha
        self.at_upper[leaving] = direction * alpha[r] < 0
        self.beta[r] = start + direction * step

        self.t[r] /= alpha[r]
        others = np.arange(self.m) != r
        self.t[others] -= np.outer(alpha[others], self.t[r])
        self.d -= self.d[j] * self.t[r]
        self.d[j] = 0.0
        self.basis[r] = j
        self.at_upper[j] = False

    def iterate(self, cost: np.ndarray, limit: int) -> tuple[int, float] | None:
        """Runs simplex pivots until optimal; returns the unbounded column if any."""
        self.refactor(cost)
        threshold = 2 * (self.m + self.n)
        while True:
            if self.iterations >= limit:
                err_msg = f'simplex did not converge in {limit} iterations'
                raise LpError(err_msg)
            if self.iterations and self.iterations % REFACTOR_EVERY == 0:
                self.refactor(cost)
            choice = self.entering()
            if choice is None:
                return None
            j, direction = choice
            r, step = self.ratio(j, direction)
            if not np.isfinite(step):
                return j, direction
            self.iterations += 1
            if step <= FEAS_TOL:
                self.degenerate += 1
                if not self.bland and self.degenerate > threshold:
                    logger.debug(f'bland rule after {self.degenerate} degenerate pivots')
                    self.bland = True
            else:
                self.degenerate = 0
            if r is None:
                self.flip(j, direction)
            else:
                self.pivot(r, j, step, direction)


@dataclass(slots=True)
class _Standardized:
    """
    `x = shift + map @ z` with `z` in `[0, cap]`; rows `a z (<= | ==) b`.
    """

    shift: np.ndarray
    map: np.ndarray
    cap: np.ndarray
    cost: np.ndarray
    a: np.ndarray
    b: np.ndarray


def _standardize(p: LinearProgram) -> _Standardized:
    n = p.objective.size
    shift = np.zeros(n)
    columns: list[np.ndarray] = []
    caps: list[float] = []
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        unit = np.zeros(n)
        unit[j] = 1.0
        if np.isfinite(lo):
            shift[j] = lo
            columns.append(unit)
            caps.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            columns.append(-unit)
            caps.append(np.inf)
        else:
            columns.extend((unit, -unit))
            caps.extend((np.inf, np.inf))
    mapping = np.array(columns).T if columns else np.zeros((n, 0))
    return _Standardized(
        shift=shift,
        map=mapping,
        cap=np.array(caps, dtype=float),
        cost=p.objective @ mapping,
        a=p.rows @ mapping,
        b=p.rhs - p.rows @ shift,
    )


def solve_lp(p: LinearProgram) -> LpOutcome:
    """
    Solves `p` with a dense two-phase bounded-variable primal simplex.

    Dantzig pricing switches to Bland's rule after `2 (rows + cols)`
    consecutive degenerate pivots. Unbounded outcomes carry an improving
    ray of the original variables.
    """
    m, _ = p.shape
    if np.any(p.lower > p.upper + FEAS_TOL):
        return LpOutcome(LpStatus.INFEASIBLE)

    s = _standardize(p)
    k = s.map.shape[1]
    slack_rows = [i for i in range(m) if p.senses[i] is Sense.LE]
    ns = len(slack_rows)
    a = np.zeros((m, k + ns))
    a[:, :k] = s.a
    for col, i in enumerate(slack_rows):
        a[i, k + col] = 1.0
    b = s.b.copy()
    negative = b < 0
    a[negative] *= -1.0
    b[negative] *= -1.0
    cap = np.concatenate([s.cap, np.full(ns, np.inf)])

    # rows whose slack has a +1 coefficient start with the slack basic
    basis: list[int] = [-1] * m
    for col, i in enumerate(slack_rows):
        if not negative[i]:
            basis[i] = k + col
    artificial_rows = [i for i in range(m) if basis[i] < 0]
    na = len(artificial_rows)
    total = k + ns + na
    full = np.zeros((m, total))
    full[:, : k + ns] = a
    for col, i in enumerate(artificial_rows):
        full[i, k + ns + col] = 1.0
        basis[i] = k + ns + col
    cap = np.concatenate([cap, np.full(na, np.inf)])

    tab = _Tableau(
        a=full,
        b=b,
        cap=cap,
        t=full.copy(),
        beta=b.copy(),
        basis=basis,
        at_upper=np.zeros(total, dtype=bool),
    )
    limit = 50 * (m + total) + 1000

    if na:
        phase1 = np.zeros(total)
        phase1[k + ns :] = -1.0
        tab.iterate(phase1, limit)
        infeasibility = float(tab.values()[k + ns :].sum())
        if infeasibility > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            logger.debug(f'phase one ended with infeasibility={infeasibility:.3e}')
            return LpOutcome(LpStatus.INFEASIBLE, iterations=tab.iterations)
        _drive_out_artificials(tab, k + ns)

    cost = np.concatenate([s.cost, np.zeros(ns)])
    tab.degenerate, tab.bland = 0, False
    unbounded = tab.iterate(cost, limit)

    if unbounded is not None:
        j, direction = unbounded
        dz = np.zeros(tab.n)
        dz[j] = direction
        dz[tab.basis] = -direction * tab.t[:, j]
        ray = s.map @ dz[:k]
        logger.debug(f'unbounded along column={j}')
        return LpOutcome(LpStatus.UNBOUNDED, ray=ray, value=np.inf, iterations=tab.iterations)

    x = _recover(tab, s, k)
    if _row_violation(p, x) > 1e-6:
        tab.refactor(cost)
        x = _recover(tab, s, k)
        if _row_violation(p, x) > 1e-5:
            err_msg = 'simplex solution violates its rows after refactorization'
            raise LpError(err_msg)
    x = np.clip(x, p.lower, p.upper)
    return LpOutcome(
        LpStatus.OPTIMAL,
        x=x,
        value=float(p.objective @ x),
        iterations=tab.iterations,
    )


def _row_violation(p: LinearProgram, x: np.ndarray) -> float:
    """Largest row violation of `x`, scaled by `1 + |rhs|`."""
    if not p.rhs.size:
        return 0.0
    residual = p.rows @ x - p.rhs
    equality = np.array([s is Sense.EQ for s in p.senses], dtype=bool)
    residual = np.where(equality, np.abs(residual), residual)
    return float(np.max(residual / (1.0 + np.abs(p.rhs))))


def _recover(tab: _Tableau, s: _Standardized, k: int) -> np.ndarray:
    z = tab.values()
    return s.shift + s.map @ z[:k]


def _drive_out_artificials(tab: _Tableau, first_artificial: int) -> None:
    """Pivots artificial variables out of the basis, dropping redundant rows."""
    r = 0
    while r < tab.m:
        if tab.basis[r] < first_artificial:
            r += 1
            continue
        row = np.abs(tab.t[r, :first_artificial])
        row[[j for j in tab.basis if j < first_artificial]] = 0.0
        j = int(np.argmax(row)) if row.size else -1
        if j >= 0 and row[j] > 1e-9:
            tab.pivot(r, j, 0.0, 1.0)
            r += 1
            continue
        keep = np.arange(tab.m) != r
        tab.t = tab.t[keep]
        tab.beta = tab.beta[keep]
        tab.a = tab.a[keep]
        tab.b = tab.b[keep]
        del tab.basis[r]

    tab.t = tab.t[:, :first_artificial]
    tab.a = tab.a[:, :first_artificial]
    tab.cap = tab.cap[:first_artificial]
    tab.at_upper = tab.at_upper[:first_artificial]
