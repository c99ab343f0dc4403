"""Two-type regret lower bound: a dense two-phase simplex solver, the optimal
two-type mechanism as a linear program, and the closed-form bound
``T_gamma * v_lo * (v_hi - v_lo) / v_hi``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DiscountSequence
from .direct_mech import DirectMechanism
from .errors import DomainError, LPNumericalError, StructureError

LE, GE, EQ = "<=", ">=", "="
_PIVOT_TOL = 1e-11
_COST_TOL = 1e-10
_FEAS_TOL = 1e-8
_STALL = 50


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LPResult:
    status: LPStatus
    value: float
    x: np.ndarray = field(repr=False)
    iterations: int = 0


@dataclass
class LinearProgram:
    """minimize ``objective @ x`` subject to rows ``(coeffs, relation, rhs)``; ``x >= 0`` unless free."""

    objective: np.ndarray
    constraints: list = field(default_factory=list)
    free: frozenset = frozenset()

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        for row, rel, _ in self.constraints:
            self._validate(row, rel)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def _validate(self, row, rel):
        if len(row) != self.n_vars:
            raise StructureError(f"constraint row has {len(row)} entries, expected {self.n_vars}")
        if rel not in (LE, GE, EQ):
            raise StructureError(f"unknown relation {rel!r}")

    def add(self, row, rel: str, rhs: float) -> None:
        row = np.asarray(row, dtype=float)
        self._validate(row, rel)
        self.constraints.append((row, rel, float(rhs)))

    def solve(self, max_iter: int = 50_000) -> LPResult:
        return solve_lp(self, max_iter=max_iter)


def _pivot(tab: np.ndarray, basis: list, r: int, c: int) -> None:
    tab[r] /= tab[r, c]
    col = tab[:, c].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])
    basis[r] = c


def _simplex(tab: np.ndarray, basis: list, n_cols: int, budget: list) -> bool:
    """Primal simplex on a tableau whose last row is the reduced-cost row.

    Entering columns follow the most negative reduced cost until ``_STALL``
    consecutive degenerate pivots occur; from then on Bland's smallest-index
    rule applies, which cannot cycle.  Only the first ``n_cols`` columns may
    enter.  Returns False when unbounded.
    """
    m = tab.shape[0] - 1
    stalled = 0
    while True:
        cost = tab[-1, :n_cols]
        entering = np.flatnonzero(cost < -_COST_TOL)
        if entering.size == 0:
            return True
        bland = stalled >= _STALL
        c = int(entering[0]) if bland else int(entering[np.argmin(cost[entering])])
        colv = tab[:m, c]
        rows = np.flatnonzero(colv > _PIVOT_TOL)
        if rows.size == 0:
            return False
        ratios = tab[rows, -1] / colv[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        if bland:
            r = int(min(ties, key=lambda i: basis[i]))
        else:
            r = int(max(ties, key=lambda i: colv[i]))
        stalled = stalled + 1 if best <= 1e-12 else 0
        _pivot(tab, basis, r, c)
        budget[0] += 1
        if budget[0] > budget[1]:
            raise LPNumericalError(f"simplex exceeded {budget[1]} pivots")


def solve_lp(lp: LinearProgram, max_iter: int = 50_000) -> LPResult:
    n = lp.n_vars
    free = sorted(lp.free)
    # free variables are split as x = x+ - x-; the x- columns are appended after the originals
    n_struct = n + len(free)

    def expand(row):
        return np.concatenate((row, -row[free])) if free else row

    rows, rels, rhs = [], [], []
    for row, rel, b in lp.constraints:
        row = expand(np.asarray(row, dtype=float))
        # b < 0 needs a flip for a nonnegative rhs; b == 0 with >= flips so the slack starts basic
        if b < 0 or (b == 0 and rel == GE):
            row, b = -row, -b
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        rows.append(row)
        rels.append(rel)
        rhs.append(b)
    m = len(rows)
    n_slack = sum(r != EQ for r in rels)
    n_art = sum(r != LE for r in rels)
    width = n_struct + n_slack + n_art
    tab = np.zeros((m + 1, width + 1))
    basis = [0] * m
    s_col, a_col = n_struct, n_struct + n_slack
    art_cols = []
    for i, (row, rel, b) in enumerate(zip(rows, rels, rhs)):
        tab[i, :n_struct] = row
        tab[i, -1] = b
        if rel == LE:
            tab[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if rel == GE:
                tab[i, s_col] = -1.0
                s_col += 1
            tab[i, a_col] = 1.0
            basis[i] = a_col
            art_cols.append(a_col)
            a_col += 1
    budget = [0, max_iter]

    if art_cols:
        tab[-1, :] = 0.0
        tab[-1, art_cols] = 1.0
        for i in range(m):
            if basis[i] in art_cols:
                tab[-1] -= tab[i]
        _simplex(tab, basis, width, budget)
        if -tab[-1, -1] > _FEAS_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
            return LPResult(LPStatus.INFEASIBLE, float("nan"), np.full(n, np.nan), budget[0])
        # drive artificials out of the basis where possible; rows where none can leave are redundant
        keep = []
        art_set = set(art_cols)
        for i in range(m):
            if basis[i] in art_set:
                cand = np.flatnonzero(np.abs(tab[i, :n_struct + n_slack]) > _PIVOT_TOL)
                if cand.size:
                    _pivot(tab, basis, i, int(cand[0]))
                    keep.append(i)
            else:
                keep.append(i)
        tab = np.vstack((tab[keep], tab[-1:]))
        basis = [basis[i] for i in keep]
        tab = np.delete(tab, art_cols, axis=1)
        width -= len(art_cols)
        m = len(keep)

    cost = np.zeros(width)
    cost[:n] = lp.objective
    if free:
        cost[n:n_struct] = -lp.objective[free]
    tab[-1, :-1] = cost
    tab[-1, -1] = 0.0
    for i in range(m):
        tab[-1] -= tab[-1, basis[i]] * tab[i]
    if not _simplex(tab, basis, width, budget):
        return LPResult(LPStatus.UNBOUNDED, float("-inf"), np.full(n, np.nan), budget[0])

    z = np.zeros(width)
    for i in range(m):
        z[basis[i]] = tab[i, -1]
    x = z[:n].copy()
    if free:
        x[free] -= z[n:n_struct]
    value = float(lp.objective @ x)
    _verify(lp, x)
    return LPResult(LPStatus.OPTIMAL, value, x, budget[0])


def _verify(lp: LinearProgram, x: np.ndarray) -> None:
    nonneg = np.ones(lp.n_vars, dtype=bool)
    nonneg[list(lp.free)] = False
    worst = max(0.0, float(-(x[nonneg]).min(initial=0.0)))
    for row, rel, b in lp.constraints:
        lhs = float(row @ x)
        scale = max(1.0, abs(b))
        if rel == LE:
            worst = max(worst, (lhs - b) / scale)
        elif rel == GE:
            worst = max(worst, (b - lhs) / scale)
        else:
            worst = max(worst, abs(lhs - b) / scale)
    if worst > _FEAS_TOL:
        raise LPNumericalError(f"simplex solution violates a constraint by {worst:.3g}")


def ic_pir_program(types: Sequence[float], seq: DiscountSequence, objective, extra_vars: int = 0) -> LinearProgram:
    """IC/PIR constraints over ``a[i, t]`` then ``p[i, t]`` (row-major), plus ``extra_vars`` trailing columns.

    Rows: ``a <= 1``; suffix participation ``sum_{t>=s} g_t (a v - p) >= 0``; and for
    every misreport and every prefix length ``t = 0..T``, full truthful utility
    at least the utility of mimicking the misreport for ``t`` rounds and leaving.
    """
    types = [float(x) for x in types]
    n, T = len(types), len(seq)
    g = np.asarray(seq.gamma)
    N = 2 * n * T + extra_vars
    objective = np.asarray(objective, dtype=float)
    if objective.size != N:
        raise StructureError(f"objective has {objective.size} entries, expected {N}")
    lp = LinearProgram(objective)

    def a_idx(i, t):
        return i * T + t

    def p_idx(i, t):
        return n * T + i * T + t

    for i in range(n):
        for t in range(T):
            row = np.zeros(N)
            row[a_idx(i, t)] = 1.0
            lp.add(row, LE, 1.0)
    for i, v in enumerate(types):
        truthful = np.zeros(N)
        for t in range(T):
            truthful[a_idx(i, t)] += g[t] * v
            truthful[p_idx(i, t)] -= g[t]
        for s in range(T):
            row = np.zeros(N)
            for t in range(s, T):
                row[a_idx(i, t)] = g[t] * v
                row[p_idx(i, t)] = -g[t]
            lp.add(row, GE, 0.0)
        for j in range(n):
            if j == i:
                continue
            for tt in range(T + 1):
                row = truthful.copy()
                for t in range(tt):
                    row[a_idx(j, t)] -= g[t] * v
                    row[p_idx(j, t)] += g[t]
                lp.add(row, GE, 0.0)
    return lp


@dataclass(frozen=True)
class TwoTypeInstance:
    v_lo: float
    v_hi: float
    seq: DiscountSequence

    def __post_init__(self):
        if not 0.0 < self.v_lo < self.v_hi <= 1.0:
            raise DomainError(f"need 0 < v_lo < v_hi <= 1, got ({self.v_lo}, {self.v_hi})")


def optimal_two_type_regret(inst: TwoTypeInstance) -> tuple[float, DirectMechanism]:
    """Minimal worst-case regret over IC/PIR mechanisms for two types, with a witness."""
    types = (inst.v_lo, inst.v_hi)
    T = len(inst.seq)
    N = 4 * T + 1
    c = np.zeros(N)
    c[-1] = 1.0
    lp = ic_pir_program(types, inst.seq, c, extra_vars=1)
    lp.free = frozenset({N - 1})
    for i, v in enumerate(types):
        row = np.zeros(N)
        row[-1] = 1.0
        row[2 * T + i * T: 2 * T + (i + 1) * T] = 1.0
        lp.add(row, GE, T * v)  # R >= T v - sum_t p_t(v)
    res = lp.solve()
    if res.status is not LPStatus.OPTIMAL:
        raise LPNumericalError(f"two-type program ended {res.status.value}")
    x = res.x
    mech = DirectMechanism(types, x[: 2 * T].reshape(2, T), x[2 * T: 4 * T].reshape(2, T))
    return res.value, mech


def closed_form_bound(v_lo: float, v_hi: float, t_gamma: float) -> float:
    if not 0.0 <= v_lo < v_hi:
        raise DomainError(f"need 0 <= v_lo < v_hi, got ({v_lo}, {v_hi})")
    return t_gamma * v_lo * (v_hi - v_lo) / v_hi


def regret_decomposition(mech: DirectMechanism, seq: DiscountSequence) -> tuple[float, float]:
    """``(allocative inefficiency of the low type, information rent bound for the high type)``.

    Both are computed from the low type's allocations, so
    ``ineff / v_lo + rent / (v_hi - v_lo) == T_gamma`` holds for any mechanism.
    """
    if mech.n_types != 2:
        raise StructureError("decomposition is defined for two types")
    v_lo, v_hi = mech.types
    g = np.asarray(seq.gamma)
    a_lo = mech.alloc[0]
    ineff = float(np.sum(g * (1.0 - a_lo)) * v_lo)
    rent = float(np.sum(g * a_lo) * (v_hi - v_lo))
    return ineff, rent
