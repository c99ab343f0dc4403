"""Phase-based menu pricing with delayed updates and interval refinement.

Each phase posts the quadratic menu of the current candidate interval for
``D = ceil(T_gamma * ln(T_gamma / eps))`` rounds (at least one), with
``eps = delta**2 / 32``.  Only the buyer's choice in the first round of a phase
moves the interval; it becomes ``[p'(a) - sqrt(2 eps), p'(a) + sqrt(2 eps)]``
intersected with the old one.  Once the width drops below ``COLLAPSE_WIDTH`` the
remaining rounds post a single price ``lo_v`` for the whole unit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .core import OUTSIDE, Contract, DiscountSequence, OutcomeSummary, Trajectory, detect_dropout, summarize
from .errors import DomainError, InconsistentBuyerError
from .menus import (
    FiniteMenu,
    QuadraticMenu,
    build_quadratic_menu,
    discretize,
    myopic_best_response,
    posted_price_menu,
)

COLLAPSE_WIDTH = 1e-9
_NEST_TOL = 1e-12


@dataclass(frozen=True)
class PhaseParams:
    delta: float
    epsilon: float
    delay: int


def compute_phase_params(delta: float, t_gamma: float) -> PhaseParams:
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"interval width must lie in (0, 1], got {delta}")
    if t_gamma <= 0.0:
        raise DomainError("t_gamma must be positive")
    epsilon = delta * delta / 32.0
    raw = t_gamma * math.log(t_gamma / epsilon)
    return PhaseParams(delta=delta, epsilon=epsilon, delay=max(1, math.ceil(raw)))


def refine_interval(
    lo_v: float, hi_v: float, menu: QuadraticMenu, chosen_a: float, epsilon: float
) -> tuple[float, float]:
    center = menu.derivative(chosen_a)
    half = math.sqrt(2.0 * epsilon)
    new_lo, new_hi = max(lo_v, center - half), min(hi_v, center + half)
    if new_lo > new_hi:
        raise InconsistentBuyerError(
            f"choice a={chosen_a} (slope {center}) is incompatible with [{lo_v}, {hi_v}]"
        )
    return new_lo, new_hi


@dataclass(frozen=True)
class PhaseRecord:
    index: int
    start_round: int  # 0-based
    lo_v: float
    hi_v: float
    params: PhaseParams
    menu: Optional[QuadraticMenu]  # None in the fixed-price endgame
    first_choice: Optional[float]  # None when the buyer takes the outside option
    rounds_used: int

    @property
    def endgame(self) -> bool:
        return self.menu is None

    @property
    def regret_bound(self) -> float:
        return 2.0 * self.params.delta * self.rounds_used


@dataclass(frozen=True)
class RunTranscript:
    v: float
    seq: DiscountSequence
    phases: tuple[PhaseRecord, ...]
    trajectory: Trajectory
    summary: OutcomeSummary
    instant_regret: tuple[float, ...] = field(repr=False)

    def phase_of_round(self) -> list[int]:
        out = []
        for ph in self.phases:
            out.extend([ph.index] * ph.rounds_used)
        return out

    @property
    def phase_regret_bound(self) -> float:
        """Sum over phases of ``2 * delta_e * D_e`` with ``D_e`` the rounds actually used."""
        return math.fsum(ph.regret_bound for ph in self.phases)

    def phase_regret(self) -> list[float]:
        out = []
        for ph in self.phases:
            s = ph.start_round
            out.append(math.fsum(self.instant_regret[s:s + ph.rounds_used]))
        return out


FirstChooser = Callable[[int, QuadraticMenu, int], Optional[float]]


def execute_phases(
    seq: DiscountSequence,
    v: float,
    choose_first: FirstChooser,
    override: Optional[Sequence[Contract]] = None,
) -> RunTranscript:
    """Drive the phase loop; ``choose_first(phase, menu, start_round)`` returns an allocation or None.

    Rounds after the first in a phase are played myopically unless ``override``
    supplies the contracts actually taken (tree-optimal replay).
    """
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"type {v} outside [0, 1]")
    T = len(seq)
    lo, hi = 0.0, 1.0
    t = 0
    contracts: list[Contract] = []
    phases: list[PhaseRecord] = []
    while t < T:
        delta = hi - lo
        e = len(phases)
        if delta < COLLAPSE_WIDTH:
            used = T - t
            take = Contract(1.0, lo) if v >= lo else OUTSIDE
            block = [take] * used
            if override is not None:
                block = list(override[t:t + used])
            contracts.extend(block)
            params = PhaseParams(delta=delta, epsilon=delta * delta / 32.0, delay=used)
            phases.append(PhaseRecord(e, t, lo, hi, params, None, block[0].allocation, used))
            t += used
            break
        params = compute_phase_params(delta, seq.t_gamma)
        used = min(params.delay, T - t)
        menu = build_quadratic_menu(lo, hi)
        first = choose_first(e, menu, t)
        phases.append(PhaseRecord(e, t, lo, hi, params, menu, first, used))
        if first is None:
            break
        block = [Contract(first, menu.price(first))]
        a_star = myopic_best_response(menu, v)
        rest = Contract(a_star, menu.price(a_star))
        if menu.utility(v, a_star) < 0.0:
            rest = OUTSIDE
        block.extend([rest] * (used - 1))
        if override is not None:
            block = list(override[t:t + used])
        contracts.extend(block)
        new_lo, new_hi = refine_interval(lo, hi, menu, first, params.epsilon)
        if new_lo < lo - _NEST_TOL or new_hi > hi + _NEST_TOL:
            raise InconsistentBuyerError("refined interval is not nested")
        lo, hi = new_lo, new_hi
        t += used
    contracts.extend([OUTSIDE] * (T - len(contracts)))
    traj = Trajectory(tuple(contracts), detect_dropout(contracts))
    inst = tuple(v - c.payment for c in contracts)
    return RunTranscript(
        v=v, seq=seq, phases=tuple(phases), trajectory=traj,
        summary=summarize(v, traj, seq), instant_regret=inst,
    )


def run_algorithm1(seq: DiscountSequence, buyer, v: float) -> RunTranscript:
    """Simulate the mechanism against ``buyer`` (a :class:`~mechlab.buyer.BuyerStrategy`)."""
    from . import buyer as buyer_engine

    if buyer.kind == "myopic":
        def choose(e, menu, t):
            a = myopic_best_response(menu, v)
            return a if menu.utility(v, a) >= 0.0 else None

        return execute_phases(seq, v, choose)

    if buyer.kind == "phase_dp":
        traj, _ = buyer_engine.phase_dp_response(seq, v, buyer.grid_size)
        return _replay(seq, v, traj, override=False)

    if buyer.kind == "tree_optimal":
        tree = algorithm1_tree(seq, buyer.grid_size)
        traj, _ = buyer_engine.best_response_tree(tree, v, seq)
        return _replay(seq, v, traj, override=True)

    raise DomainError(f"unknown buyer kind {buyer.kind!r}")


def _replay(seq: DiscountSequence, v: float, traj: Trajectory, override: bool) -> RunTranscript:
    def choose(e, menu, t):
        c = traj.contracts[t]
        if c.is_outside and menu.lo_a > 0.0:
            return None
        return c.allocation  # with lo_a = 0 the option (0, 0) is the grid point a = 0

    return execute_phases(seq, v, choose, override=traj.contracts if override else None)


def algorithm1_tree(seq: DiscountSequence, grid_size: int):
    """The mechanism as a finite tree whose menus are ``discretize(menu, grid_size)``.

    Only first-round options of a phase branch; the outside option there ends the
    interaction, unless ``lo_a = 0`` where it is also the grid point a = 0.
    Every option of a non-first round leads to the same continuation.
    """
    from .buyer import MechanismTree, TreeNode

    T = len(seq)

    def build(t: int, lo: float, hi: float) -> Optional[TreeNode]:
        if t >= T:
            return None
        delta = hi - lo
        if delta < COLLAPSE_WIDTH:
            return _chain([posted_price_menu(lo)] * (T - t))
        params = compute_phase_params(delta, seq.t_gamma)
        used = min(params.delay, T - t)
        menu = build_quadratic_menu(lo, hi)
        fmenu = discretize(menu, grid_size)
        children = {}
        for i, (a, _) in enumerate(fmenu.options):
            if i == 0 and menu.lo_a > 0.0:
                continue
            nlo, nhi = refine_interval(lo, hi, menu, a, params.epsilon)
            cont = build(t + used, nlo, nhi)
            inner = _chain([fmenu] * (used - 1), cont)
            if inner is not None:
                children[i] = inner
        return TreeNode(fmenu, children)

    return MechanismTree(build(0, 0.0, 1.0), T)


def _chain(menus: Sequence[FiniteMenu], tail=None):
    from .buyer import TreeNode

    node = tail
    for m in reversed(list(menus)):
        node = TreeNode(m, {i: node for i in range(len(m))} if node is not None else {})
    return node


def transcript_violations(run: RunTranscript, tol: float = 1e-12) -> list[str]:
    """Structural guarantees of a run against a consistent buyer; empty when all hold.

    No dropout, the true type inside every interval, per-round regret at most
    ``2 * delta`` of the phase, and widths at least halving between phases.
    """
    out = []
    v = run.v
    d = run.trajectory.dropout_round
    if d is not None:
        # (0, 0) is itself on the menu while lo_a == 0 and in the endgame; taking it is not a walk-out
        owner = run.phase_of_round()
        walked = [t for t in range(d, len(run.seq)) if run.phases[owner[t]].menu is not None
                  and run.phases[owner[t]].menu.lo_a > tol]
        if walked:
            out.append(f"buyer dropped out at round {walked[0] + 1}")
    prev = None
    for ph in run.phases:
        if not ph.lo_v - tol <= v <= ph.hi_v + tol:
            out.append(f"phase {ph.index}: v={v} outside [{ph.lo_v}, {ph.hi_v}]")
        if prev is not None and ph.params.delta > prev / 2.0 + tol:
            out.append(f"phase {ph.index}: width {ph.params.delta} exceeds half of {prev}")
        prev = ph.params.delta
        for t in range(ph.start_round, ph.start_round + ph.rounds_used):
            if run.instant_regret[t] > 2.0 * ph.params.delta + tol:
                out.append(
                    f"round {t + 1}: regret {run.instant_regret[t]} above 2*delta={2.0 * ph.params.delta}"
                )
    return out
