"""Buyer behaviour: exact best response on finite mechanism trees, the
phase-structured search against the menu-pricing mechanism, and the
single-round deviation audit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .algo1 import COLLAPSE_WIDTH, compute_phase_params, execute_phases, refine_interval
from .core import OUTSIDE, Contract, DiscountSequence, Trajectory, detect_dropout, prefix_utility
from .errors import CapacityError, DomainError, StructureError
from .menus import (
    FiniteMenu,
    QuadraticMenu,
    allocation_grid,
    build_quadratic_menu,
    myopic_best_response,
    myopic_utility,
)

TIE_TOL = 1e-12
NODE_BUDGET = 10**8


@dataclass(eq=False)
class TreeNode:
    """One history of an indirect mechanism.

    ``children`` maps an option index of ``menu`` to the next node; a missing
    entry means only the outside option is offered for the rest of the game.
    ``labels`` optionally maps an option index to the types the designer
    recommends it to; an indifferent buyer of such a type follows the label.
    """

    menu: FiniteMenu
    children: dict[int, "TreeNode"] = field(default_factory=dict)
    labels: dict[int, tuple[float, ...]] = field(default_factory=dict)

    def recommended(self, v: float) -> Optional[int]:
        for i, types in self.labels.items():
            if any(abs(v - x) <= TIE_TOL for x in types):
                return i
        return None


@dataclass(eq=False)
class MechanismTree:
    root: Optional[TreeNode]
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise StructureError("tree depth must be at least 1")
        self._check(self.root, 0, set())

    def _check(self, node, d, seen):
        if node is None or (id(node), d) in seen:
            return
        seen.add((id(node), d))
        if d >= self.depth:
            raise StructureError(f"tree has a path longer than its depth {self.depth}")
        for i, child in node.children.items():
            if not 0 <= i < len(node.menu):
                raise StructureError(f"child key {i} is not an option index")
            self._check(child, d + 1, seen)

    def nodes(self):
        """Yield ``(depth, node)`` for every reachable distinct (node, depth) pair, root first."""
        stack = [(0, self.root)]
        seen = set()
        while stack:
            d, node = stack.pop()
            if node is None or (id(node), d) in seen:
                continue
            seen.add((id(node), d))
            yield d, node
            for i in sorted(node.children, reverse=True):
                stack.append((d + 1, node.children[i]))

    def follow(self, choices: Sequence[int]) -> list[Contract]:
        """Contracts obtained by picking option indices ``choices`` round by round."""
        node = self.root
        out = []
        for i in choices:
            if node is None:
                out.append(OUTSIDE)
                continue
            a, p = node.menu.options[i]
            out.append(Contract(a, p))
            node = node.children.get(i)
        return out


@dataclass(frozen=True)
class BuyerStrategy:
    kind: str  # "myopic" | "tree_optimal" | "phase_dp"
    grid_size: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("myopic", "tree_optimal", "phase_dp"):
            raise DomainError(f"unknown buyer kind {self.kind!r}")
        if self.kind != "myopic" and (self.grid_size is None or self.grid_size < 2):
            raise DomainError(f"{self.kind} needs grid_size >= 2")

    @classmethod
    def myopic(cls) -> "BuyerStrategy":
        return cls("myopic")

    @classmethod
    def tree_optimal(cls, grid_size: int) -> "BuyerStrategy":
        return cls("tree_optimal", grid_size)

    @classmethod
    def phase_dp(cls, grid_size: int) -> "BuyerStrategy":
        return cls("phase_dp", grid_size)


def _pick(values: Sequence[float], allocations: Sequence[float], payments: Sequence[float],
          recommended: Optional[int] = None) -> int:
    """Index of the best value.

    Near-ties go to the recommended option if it is among them, otherwise to the
    larger allocation, then the larger payment.
    """
    best = max(values)
    cands = [i for i, x in enumerate(values) if x >= best - TIE_TOL]
    if recommended in cands:
        return recommended
    return max(cands, key=lambda i: (allocations[i], payments[i]))


def best_response_tree(
    tree: MechanismTree, v: float, seq: DiscountSequence
) -> tuple[Trajectory, float]:
    """Utility-maximizing path by backward induction over every node of the tree."""
    T = len(seq)
    if tree.depth != T:
        raise StructureError(f"tree depth {tree.depth} != discount sequence length {T}")
    gamma = seq.gamma
    memo: dict[tuple[int, int], tuple[float, int]] = {}

    def value(node: Optional[TreeNode], d: int) -> float:
        if node is None or d >= T:
            return 0.0
        key = (id(node), d)
        if key in memo:
            return memo[key][0]
        vals, allocs, pays = [], [], []
        for i, (a, p) in enumerate(node.menu.options):
            cont = value(node.children.get(i), d + 1)
            vals.append(gamma[d] * (a * v - p) + cont)
            allocs.append(a)
            pays.append(p)
        k = _pick(vals, allocs, pays, node.recommended(v) if node.labels else None)
        memo[key] = (vals[k], k)
        return vals[k]

    total = value(tree.root, 0)
    contracts = []
    node = tree.root
    for d in range(T):
        if node is None:
            contracts.append(OUTSIDE)
            continue
        k = memo[(id(node), d)][1]
        a, p = node.menu.options[k]
        contracts.append(Contract(a, p))
        node = node.children.get(k)
    traj = Trajectory(tuple(contracts), detect_dropout(contracts))
    return traj, total


def strategy_utility(tree: MechanismTree, choices: Sequence[int], v: float, seq: DiscountSequence) -> float:
    contracts = tree.follow(choices)
    return prefix_utility(v, Trajectory(tuple(contracts)), seq, len(seq))


def epsilon_myopic_audit(menu: QuadraticMenu, chosen_a: float, v: float) -> float:
    """Single-round utility forgone by ``chosen_a`` relative to the myopic optimum.

    ``v*a - p(a) = const - (a - b)**2 / 2`` with ``b = v - c1``, so the gap is taken
    from squared distances to ``b``; subtracting two utilities directly loses all
    precision once the interval is narrow.
    """
    if not menu.lo_a - 1e-12 <= chosen_a <= 1.0 + 1e-12:
        raise DomainError(f"allocation {chosen_a} outside menu domain [{menu.lo_a}, 1]")
    b = v - menu.c1
    a_star = myopic_best_response(menu, v)
    return max(0.0, 0.5 * ((chosen_a - b) ** 2 - (a_star - b) ** 2))


class _PhaseSearch:
    """Exact branch-and-bound over first-round grid choices of every phase.

    Rounds after the first in a phase cannot move the interval, so the buyer plays
    them myopically (taking the outside option only if even the myopic contract
    loses money).  A branch is skipped when an upper bound on its value cannot
    beat the incumbent by more than ``rel_tol * gamma_s * eps``: any later round is
    worth at most ``max(0, v - lo)`` where ``lo`` is the lower end of the interval
    it starts from.  Differences under that tolerance count as ties and go to the
    choice closest to the myopic optimum.
    """

    def __init__(self, seq: DiscountSequence, v: float, grid_size: int,
                 node_budget: int = NODE_BUDGET, rel_tol: float = 1e-9):
        self.seq = seq
        self.v = v
        self.grid_size = grid_size
        self.T = len(seq)
        self.cum = np.concatenate(([0.0], np.cumsum(seq.gamma)))
        self.node_budget = node_budget
        self.rel_tol = rel_tol
        self.nodes = 0
        self.memo: dict = {}

    def mass(self, s: int, e: int) -> float:
        e = min(e, self.T)
        return float(self.cum[e] - self.cum[s]) if e > s else 0.0

    def phase(self, s, lo, hi):
        params = compute_phase_params(hi - lo, self.seq.t_gamma)
        used = min(params.delay, self.T - s)
        return params, used, build_quadratic_menu(lo, hi)

    def upper(self, s, lo, hi) -> float:
        if s >= self.T:
            return 0.0
        v = self.v
        if hi - lo < COLLAPSE_WIDTH:
            return self.mass(s, self.T) * max(0.0, v - lo)
        _, used, menu = self.phase(s, lo, hi)
        first = self.mass(s, s + used) * max(0.0, myopic_utility(menu, v))
        return first + self.mass(s + used, self.T) * max(0.0, v - lo)

    def solve(self, s: int, lo: float, hi: float) -> tuple[float, tuple]:
        if s >= self.T:
            return 0.0, ()
        key = (s, round(lo, 12), round(hi, 12))
        if key in self.memo:
            return self.memo[key]
        self.nodes += 1
        if self.nodes > self.node_budget:
            raise CapacityError(f"phase search exceeded {self.node_budget} nodes")
        v = self.v
        if hi - lo < COLLAPSE_WIDTH:
            out = (self.mass(s, self.T) * max(0.0, v - lo), ())
            self.memo[key] = out
            return out
        params, used, menu = self.phase(s, lo, hi)
        g = self.seq.gamma[s]
        u_star = myopic_utility(menu, v)
        common = g * u_star + self.mass(s + 1, s + used) * max(0.0, u_star)
        # utility differences near the optimum are far below the resolution of the
        # utility itself once delta is small, so rank by the exact quadratic gap
        b = v - menu.c1
        a_star = myopic_best_response(menu, v)
        grid = allocation_grid(menu, self.grid_size)
        gaps = 0.5 * ((grid - b) ** 2 - (a_star - b) ** 2)
        order = sorted(range(len(grid)), key=lambda i: (gaps[i], -grid[i]))
        tol = self.rel_tol * g * params.epsilon
        best_rel, best_plan = -math.inf, ()
        for i in order:
            a = float(grid[i])
            nlo, nhi = refine_interval(lo, hi, menu, a, params.epsilon)
            head = -g * float(gaps[i])
            if best_rel > -math.inf and head + self.upper(s + used, nlo, nhi) <= best_rel + tol:
                continue
            fut, plan = self.solve(s + used, nlo, nhi)
            if head + fut > best_rel + tol:
                best_rel, best_plan = head + fut, (a,) + plan
        best_val = common + best_rel
        if menu.lo_a > 0.0 and 0.0 > best_val + tol:
            best_val, best_plan = 0.0, (None,)
        self.memo[key] = (best_val, best_plan)
        return best_val, best_plan


def phase_dp_response(
    seq: DiscountSequence, v: float, grid_size: int, *, node_budget: int = NODE_BUDGET
) -> tuple[Trajectory, float]:
    """Optimal play against the menu-pricing mechanism with first-round choices on a grid."""
    if grid_size < 2:
        raise DomainError("grid_size must be at least 2")
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"type {v} outside [0, 1]")
    search = _PhaseSearch(seq, v, grid_size, node_budget=node_budget)
    _, plan = search.solve(0, 0.0, 1.0)
    it = iter(plan)

    def choose(e, menu, t):
        return next(it)

    run = execute_phases(seq, v, choose)
    return run.trajectory, run.summary.buyer_utility
