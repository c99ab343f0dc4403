"""Conversions between finite indirect mechanisms (trees) and direct mechanisms.

Direct to indirect: walk the rounds, split each node's candidate types by their
round-``t`` allocation, charge every group its cheapest payment and push each
type's excess into the next round scaled by ``gamma_t / gamma_{t+1}``.  The
discounted payment stream of every type is unchanged, so truthful utilities are
preserved while undiscounted revenue can only grow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .buyer import MechanismTree, TreeNode, best_response_tree
from .core import DiscountSequence
from .direct_mech import DEFAULT_TOL, DirectMechanism, check_ic_pir
from .errors import ComplianceLostError, FinalRoundEqualizationError, PreconditionError, StructureError
from .menus import FiniteMenu

GROUP_TOL = 1e-12


@dataclass(eq=False)
class CandidateNode:
    """Types still consistent with the history, and the menu offered to them."""

    values: tuple[int, ...]
    depth: int
    menu: Optional[FiniteMenu] = None
    children: dict[float, "CandidateNode"] = field(default_factory=dict)
    groups: dict[float, tuple[int, ...]] = field(default_factory=dict)


def indirect_to_direct(tree: MechanismTree, seq: DiscountSequence, types: Sequence[float]) -> DirectMechanism:
    """Tabulate each type's best-response path through ``tree``."""
    rows = [best_response_tree(tree, float(v), seq)[0] for v in types]
    return DirectMechanism.from_trajectories(types, rows)


def _group(alloc_col: np.ndarray, members: Sequence[int]) -> list[tuple[float, list[int]]]:
    """Cluster members by allocation; the key is the smallest allocation in the cluster."""
    order = sorted(members, key=lambda i: (alloc_col[i], i))
    groups: list[tuple[float, list[int]]] = []
    for i in order:
        a = float(alloc_col[i])
        if groups and a - groups[-1][0] <= GROUP_TOL:
            groups[-1][1].append(i)
        else:
            groups.append((a, [i]))
    return [(0.0 if a <= GROUP_TOL else a, sorted(m)) for a, m in groups]


StepHook = Callable[[int, int, DirectMechanism], None]


def build_candidate_tree(
    mech: DirectMechanism,
    seq: DiscountSequence,
    *,
    audit: bool = False,
    tolerance: float = DEFAULT_TOL,
    on_step: Optional[StepHook] = None,
) -> tuple[CandidateNode, DirectMechanism]:
    """Run the payment-deferral construction; return the candidate tree and the adjusted mechanism."""
    report = check_ic_pir(mech, seq, tolerance)
    if not report.compliant:
        raise PreconditionError(
            f"input mechanism violates IC/PIR at {len(report.violations)} points "
            f"(min slack {report.min_slack:.3g})"
        )
    T = mech.T
    g = seq.gamma
    alloc = mech.alloc
    pay = np.array(mech.pay, dtype=float)
    truthful = mech.truthful_utilities(seq)

    def audit_step(t, i):
        current = mech.with_payments(pay)
        rep = check_ic_pir(current, seq, tolerance)
        if not rep.compliant:
            raise ComplianceLostError(
                f"IC/PIR lost after adjusting type {mech.types[i]} in round {t}: {rep.violations[0]}"
            )
        drift = np.abs(current.truthful_utilities(seq) - truthful).max()
        if drift > tolerance:
            raise ComplianceLostError(f"truthful utility moved by {drift:.3g} in round {t}")
        if on_step is not None:
            on_step(t, i, current)

    root = CandidateNode(tuple(range(mech.n_types)), 0)
    level = [root]
    for t in range(T):
        nxt = []
        for node in level:
            opts = [(0.0, 0.0)]
            for a, members in _group(alloc[:, t], node.values):
                p_min = 0.0 if a == 0.0 else float(min(pay[i, t] for i in members))
                for i in members:
                    excess = pay[i, t] - p_min
                    if excess <= 0.0:
                        continue
                    if t == T - 1:
                        if excess > tolerance:
                            raise FinalRoundEqualizationError(
                                f"types {[mech.types[j] for j in members]} share allocation {a} "
                                f"in the last round but pay {[float(pay[j, t]) for j in members]}"
                            )
                    else:
                        pay[i, t + 1] += g[t] / g[t + 1] * excess
                    pay[i, t] = p_min
                    if audit:
                        audit_step(t, i)
                if a > 0.0:
                    opts.append((a, p_min))
                node.groups[a] = tuple(members)
                if t < T - 1:
                    child = CandidateNode(tuple(members), t + 1)
                    node.children[a] = child
                    nxt.append(child)
            node.menu = FiniteMenu(tuple(opts))
        level = nxt
    return root, mech.with_payments(pay)


def candidate_to_tree(root: CandidateNode, depth: int, types: Sequence[float]) -> MechanismTree:
    """Materialize the tree; each option is labelled with the types whose report selects it."""

    def convert(node: CandidateNode) -> TreeNode:
        index = {a: k for k, a in enumerate(node.menu.allocations)}
        children = {}
        for a, child in node.children.items():
            if a not in index:
                raise StructureError(f"child allocation {a} missing from menu")
            children[index[a]] = convert(child)
        labels = {index[a]: tuple(types[i] for i in members) for a, members in node.groups.items()}
        return TreeNode(node.menu, children, labels)

    return MechanismTree(convert(root), depth)


def direct_to_indirect(
    mech: DirectMechanism,
    seq: DiscountSequence,
    audit: bool = False,
    *,
    tolerance: float = DEFAULT_TOL,
    on_step: Optional[StepHook] = None,
) -> tuple[MechanismTree, DirectMechanism]:
    root, adjusted = build_candidate_tree(mech, seq, audit=audit, tolerance=tolerance, on_step=on_step)
    return candidate_to_tree(root, mech.T, mech.types), adjusted


@dataclass(frozen=True)
class RoundTripRow:
    v: float
    revenue_direct: float
    revenue_adjusted: float
    revenue_indirect: float
    path_matches: bool


@dataclass(frozen=True)
class RoundTripReport:
    rows: tuple[RoundTripRow, ...]
    tolerance: float

    @property
    def chain_holds(self) -> bool:
        """``Rev(D) <= Rev(D') == Rev(indirect)`` for every type."""
        tol = self.tolerance
        return all(
            r.revenue_direct <= r.revenue_adjusted + tol
            and abs(r.revenue_adjusted - r.revenue_indirect) <= tol
            for r in self.rows
        )

    @property
    def paths_match(self) -> bool:
        return all(r.path_matches for r in self.rows)


def roundtrip_audit(
    mech: DirectMechanism, seq: DiscountSequence, audit: bool = True, tolerance: float = DEFAULT_TOL
) -> RoundTripReport:
    tree, adjusted = direct_to_indirect(mech, seq, audit=audit, tolerance=tolerance)
    back = indirect_to_direct(tree, seq, mech.types)
    rows = []
    for i, v in enumerate(mech.types):
        same = bool(
            np.allclose(back.alloc[i], adjusted.alloc[i], rtol=0.0, atol=GROUP_TOL)
            and np.allclose(back.pay[i], adjusted.pay[i], rtol=0.0, atol=tolerance)
        )
        rows.append(RoundTripRow(
            v=v,
            revenue_direct=float(mech.pay[i].sum()),
            revenue_adjusted=float(adjusted.pay[i].sum()),
            revenue_indirect=float(back.pay[i].sum()),
            path_matches=same,
        ))
    return RoundTripReport(tuple(rows), tolerance)
