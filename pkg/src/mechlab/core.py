"""Discount sequences, contracts, trajectories and the utility/revenue/regret arithmetic.

Payments are charged ex-ante: a round with contract ``(a, p)`` gives a type-``v``
buyer ``gamma_t * (a * v - p)``, the payment is never scaled by the allocation.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import DomainError, StructureError

# geometric weights that underflow are floored here so that gamma_T > 0 still holds
GAMMA_FLOOR = sys.float_info.min


@dataclass(frozen=True)
class DiscountSequence:
    gamma: tuple[float, ...]
    t_gamma: float = field(init=False)

    def __post_init__(self):
        gamma = tuple(float(g) for g in self.gamma)
        if not gamma:
            raise DomainError("discount sequence must have at least one round")
        if gamma[-1] <= 0.0 or any(not math.isfinite(g) for g in gamma):
            raise DomainError("discount factors must be finite and strictly positive")
        for prev, nxt in zip(gamma, gamma[1:]):
            if nxt > prev:
                raise DomainError(f"discount factors must be nonincreasing ({prev} < {nxt})")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "t_gamma", math.fsum(gamma))

    @classmethod
    def geometric(cls, ratio: float, T: int) -> "DiscountSequence":
        """``gamma_t = ratio**t`` for ``t = 1..T``."""
        if not 0.0 < ratio <= 1.0:
            raise DomainError(f"geometric ratio must lie in (0, 1], got {ratio}")
        if T < 1:
            raise DomainError("T must be at least 1")
        return cls(tuple(max(ratio ** t, GAMMA_FLOOR) for t in range(1, T + 1)))

    @classmethod
    def constant(cls, T: int, value: float = 1.0) -> "DiscountSequence":
        return cls((float(value),) * T)

    @property
    def T(self) -> int:
        return len(self.gamma)

    def __len__(self) -> int:
        return len(self.gamma)


@dataclass(frozen=True)
class Contract:
    allocation: float
    payment: float

    def __post_init__(self):
        if not 0.0 <= self.allocation <= 1.0:
            raise DomainError(f"allocation {self.allocation} outside [0, 1]")
        if self.payment < 0.0:
            raise DomainError(f"negative payment {self.payment}")

    @property
    def is_outside(self) -> bool:
        return self.allocation == 0.0 and self.payment == 0.0


OUTSIDE = Contract(0.0, 0.0)


@dataclass(frozen=True)
class Trajectory:
    """Fixed-length record of the contract taken in each round.

    Dropout is encoded by trailing outside-option contracts; ``dropout_round``
    (0-based) is the first round from which every contract is the outside option.
    """

    contracts: tuple[Contract, ...]
    dropout_round: Optional[int] = None

    def __post_init__(self):
        contracts = tuple(self.contracts)
        object.__setattr__(self, "contracts", contracts)
        if self.dropout_round is not None:
            if not 0 <= self.dropout_round <= len(contracts):
                raise DomainError("dropout_round out of range")
            if any(not c.is_outside for c in contracts[self.dropout_round:]):
                raise DomainError("contracts after dropout must be the outside option")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "Trajectory":
        contracts = tuple(Contract(float(a), float(p)) for a, p in pairs)
        return cls(contracts, detect_dropout(contracts))

    def __len__(self) -> int:
        return len(self.contracts)

    @property
    def allocations(self) -> list[float]:
        return [c.allocation for c in self.contracts]

    @property
    def payments(self) -> list[float]:
        return [c.payment for c in self.contracts]


def detect_dropout(contracts: Sequence[Contract]) -> Optional[int]:
    """First round of the trailing run of outside options, or None if the last round is taken."""
    s = len(contracts)
    while s > 0 and contracts[s - 1].is_outside:
        s -= 1
    return None if s == len(contracts) else s


@dataclass(frozen=True)
class OutcomeSummary:
    revenue: float
    buyer_utility: float
    regret: float


def discounted_horizon(seq: DiscountSequence) -> float:
    return math.fsum(seq.gamma)


def prefix_utility(v: float, traj: Trajectory, seq: DiscountSequence, t: int) -> float:
    """Discounted utility of a type-``v`` buyer over rounds ``1..t`` (1-based, inclusive)."""
    if not 1 <= t <= len(seq):
        raise DomainError(f"round index {t} outside 1..{len(seq)}")
    if len(traj) != len(seq):
        raise StructureError("trajectory length differs from discount sequence length")
    return math.fsum(
        g * (c.allocation * v - c.payment) for g, c in zip(seq.gamma[:t], traj.contracts[:t])
    )


def revenue(traj: Trajectory) -> float:
    return math.fsum(c.payment for c in traj.contracts)


def regret(v: float, traj: Trajectory, T: int) -> float:
    return T * v - revenue(traj)


def summarize(v: float, traj: Trajectory, seq: DiscountSequence) -> OutcomeSummary:
    rev = revenue(traj)
    return OutcomeSummary(
        revenue=rev,
        buyer_utility=prefix_utility(v, traj, seq, len(seq)),
        regret=len(seq) * v - rev,
    )
