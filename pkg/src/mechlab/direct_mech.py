"""Direct revelation mechanisms on a finite type grid and their IC/PIR audit."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Contract, DiscountSequence, Trajectory, detect_dropout
from .errors import DomainError, GeneratorError, StructureError

DEFAULT_TOL = 1e-9
# LP vertices and deferral arithmetic leave values a hair outside the box
_CLIP_TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DirectMechanism:
    """Report ``types[i]`` commits the seller to ``(alloc[i, t], pay[i, t])`` for ``t = 0..T-1``."""

    types: tuple[float, ...]
    alloc: np.ndarray
    pay: np.ndarray

    def __post_init__(self):
        types = tuple(float(x) for x in self.types)
        alloc = np.array(self.alloc, dtype=float)
        pay = np.array(self.pay, dtype=float)
        if not types:
            raise DomainError("a direct mechanism needs at least one type")
        if any(b <= a for a, b in zip(types, types[1:])):
            raise DomainError("types must be sorted and distinct")
        if types[0] < 0.0 or types[-1] > 1.0:
            raise DomainError("types must lie in [0, 1]")
        if alloc.ndim != 2 or alloc.shape != pay.shape or alloc.shape[0] != len(types):
            raise StructureError(
                f"tables must both be {len(types)} x T, got {alloc.shape} and {pay.shape}"
            )
        if alloc.shape[1] < 1:
            raise StructureError("T must be at least 1")
        if np.any(alloc < -_CLIP_TOL) or np.any(alloc > 1.0 + _CLIP_TOL):
            raise DomainError("allocations must lie in [0, 1]")
        if np.any(pay < -_CLIP_TOL):
            raise DomainError("payments must be nonnegative")
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "alloc", _frozen(np.clip(alloc, 0.0, 1.0)))
        object.__setattr__(self, "pay", _frozen(np.maximum(pay, 0.0)))

    @property
    def T(self) -> int:
        return self.alloc.shape[1]

    @property
    def n_types(self) -> int:
        return len(self.types)

    def row(self, i: int) -> Trajectory:
        contracts = tuple(Contract(float(a), float(p)) for a, p in zip(self.alloc[i], self.pay[i]))
        return Trajectory(contracts, detect_dropout(contracts))

    def with_payments(self, pay) -> "DirectMechanism":
        return DirectMechanism(self.types, self.alloc, pay)

    def truthful_utilities(self, seq: DiscountSequence) -> np.ndarray:
        g = np.asarray(seq.gamma)
        v = np.asarray(self.types)[:, None]
        return (g * (self.alloc * v - self.pay)).sum(axis=1)

    @classmethod
    def from_trajectories(cls, types: Sequence[float], rows: Sequence[Trajectory]) -> "DirectMechanism":
        alloc = [[c.allocation for c in r.contracts] for r in rows]
        pay = [[c.payment for c in r.contracts] for r in rows]
        return cls(tuple(types), np.array(alloc), np.array(pay))


@dataclass(frozen=True)
class Violation:
    v: float
    v_hat: float
    t: int  # prefix length, 0 = dropping out before the first round
    slack: float

    @property
    def kind(self) -> str:
        return "PIR" if self.v == self.v_hat or self.t == 0 else "IC"


@dataclass(frozen=True, eq=False)
class ComplianceReport:
    """``slacks[i, j, t] = U_{1:T}(v_i; v_i) - U_{1:t}(v_j; v_i)`` for ``t = 0..T``."""

    slacks: np.ndarray = field(repr=False)
    min_slack: float
    violations: tuple[Violation, ...]
    tolerance: float

    @property
    def compliant(self) -> bool:
        return not self.violations


def _check_dims(mech: DirectMechanism, seq: DiscountSequence) -> None:
    if len(seq) != mech.T:
        raise StructureError(f"discount sequence has {len(seq)} rounds, mechanism has {mech.T}")


def prefix_utility_table(mech: DirectMechanism, seq: DiscountSequence) -> np.ndarray:
    """``U[j, i, t]``: utility of true type ``i`` reporting ``j`` and leaving after ``t`` rounds."""
    g = np.asarray(seq.gamma)
    zero = np.zeros((mech.n_types, 1))
    cum_a = np.concatenate((zero, np.cumsum(g * mech.alloc, axis=1)), axis=1)
    cum_p = np.concatenate((zero, np.cumsum(g * mech.pay, axis=1)), axis=1)
    v = np.asarray(mech.types)
    return cum_a[:, None, :] * v[None, :, None] - cum_p[:, None, :]


def check_ic_pir(mech: DirectMechanism, seq: DiscountSequence, tolerance: float = DEFAULT_TOL) -> ComplianceReport:
    _check_dims(mech, seq)
    U = prefix_utility_table(mech, seq)
    idx = np.arange(mech.n_types)
    truthful = U[idx, idx, -1]
    slacks = truthful[:, None, None] - U.transpose(1, 0, 2)
    bad = np.argwhere(slacks < -tolerance)
    violations = tuple(
        Violation(mech.types[i], mech.types[j], int(t), float(slacks[i, j, t])) for i, j, t in bad
    )
    return ComplianceReport(
        slacks=slacks, min_slack=float(slacks.min()), violations=violations, tolerance=tolerance
    )


def revenue_per_type(mech: DirectMechanism, v_index: int) -> float:
    if not 0 <= v_index < mech.n_types:
        raise DomainError(f"type index {v_index} out of range")
    return float(np.sum(mech.pay[v_index]))


def audit_payment_bound(mech: DirectMechanism, seq: DiscountSequence) -> list[tuple[float, float]]:
    """Per type, ``sum_t a_t(v) * v - sum_t p_t(v)``; nonnegative for any PIR mechanism."""
    _check_dims(mech, seq)
    v = np.asarray(mech.types)
    slack = (mech.alloc * v[:, None]).sum(axis=1) - mech.pay.sum(axis=1)
    return [(float(x), float(s)) for x, s in zip(v, slack)]


def random_compliant_mechanism(
    types: Sequence[float],
    seq: DiscountSequence,
    seed: int,
    *,
    retries: int = 5,
) -> DirectMechanism:
    """Vertex of the IC/PIR polytope maximizing a random revenue-weighted objective.

    Vertices pool types on 0/1 allocations and leave many IC constraints binding,
    so they exercise both payment deferral and exact indifference.
    """
    from .lowerbound import LPStatus, ic_pir_program

    types = tuple(sorted(float(x) for x in types))
    n, T = len(types), len(seq)
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        w_pay = rng.uniform(0.5, 1.5, size=(n, T))
        w_alloc = rng.uniform(-0.25, 0.25, size=(n, T))
        lp = ic_pir_program(types, seq, -np.concatenate((w_alloc.ravel(), w_pay.ravel())))
        res = lp.solve()
        if res.status is not LPStatus.OPTIMAL:
            continue
        x = res.x
        mech = DirectMechanism(
            types,
            np.clip(x[: n * T].reshape(n, T), 0.0, 1.0),
            np.maximum(x[n * T: 2 * n * T].reshape(n, T), 0.0),
        )
        if check_ic_pir(mech, seq).compliant:
            return mech
    raise GeneratorError(f"no compliant mechanism after {retries} attempts (seed {seed})")
