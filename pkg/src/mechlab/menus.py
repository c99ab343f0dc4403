"""Quadratic contract menus and finite menus.

A quadratic menu offers every allocation ``a`` in ``[lo_a, 1]`` at price
``a**2/2 + c1*a + c2``; the coefficients are pinned by three conditions on the
candidate interval ``[lo_v, hi_v]``: slope ``lo_v`` at ``lo_a``, slope ``hi_v``
at 1, and zero surplus for type ``lo_v`` at ``lo_a``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateIntervalError, DomainError

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class QuadraticMenu:
    lo_a: float
    c1: float
    c2: float
    lo_v: float
    hi_v: float

    @property
    def delta(self) -> float:
        return self.hi_v - self.lo_v

    def derivative(self, a: float) -> float:
        return a + self.c1

    def price(self, a: float) -> float:
        return menu_price(self, a)

    def utility(self, v: float, a: float) -> float:
        """Single-round buyer surplus ``v*a - p(a)``."""
        return v * a - menu_price(self, a)


def build_quadratic_menu(lo_v: float, hi_v: float) -> QuadraticMenu:
    if not lo_v < hi_v:
        raise DegenerateIntervalError(f"need lo_v < hi_v, got [{lo_v}, {hi_v}]")
    if lo_v < 0.0 or hi_v > 1.0:
        raise DomainError(f"interval [{lo_v}, {hi_v}] not inside [0, 1]")
    lo_a = 1.0 - (hi_v - lo_v)
    c1 = hi_v - 1.0
    c2 = lo_a * lo_v - 0.5 * lo_a * lo_a - c1 * lo_a
    return QuadraticMenu(lo_a=lo_a, c1=c1, c2=c2, lo_v=lo_v, hi_v=hi_v)


def menu_price(menu: QuadraticMenu, a: float) -> float:
    if not menu.lo_a - _EDGE_TOL <= a <= 1.0 + _EDGE_TOL:
        raise DomainError(f"allocation {a} outside menu domain [{menu.lo_a}, 1]")
    # same polynomial as a**2/2 + c1*a + c2, written so it stays >= 0 in floating point
    d = a - menu.lo_a
    return a * menu.lo_v + 0.5 * d * d


def myopic_best_response(menu: QuadraticMenu, v: float) -> float:
    """Allocation maximizing ``v*a - p(a)`` on ``[lo_a, 1]`` (the first-order point, clamped)."""
    return min(max(v - menu.c1, menu.lo_a), 1.0)


def myopic_utility(menu: QuadraticMenu, v: float) -> float:
    return menu.utility(v, myopic_best_response(menu, v))


@dataclass(frozen=True)
class FiniteMenu:
    """Finitely many ``(allocation, payment)`` options, ascending by allocation, always with (0, 0)."""

    options: tuple[tuple[float, float], ...]

    def __post_init__(self):
        opts = tuple((float(a), float(p)) for a, p in self.options)
        if not opts or opts[0] != (0.0, 0.0):
            raise DomainError("finite menu must start with the outside option (0, 0)")
        for a, p in opts:
            if not 0.0 <= a <= 1.0 or p < 0.0:
                raise DomainError(f"invalid option ({a}, {p})")
        if any(a2 <= a1 for (a1, _), (a2, _) in zip(opts, opts[1:])):
            raise DomainError("allocations must be strictly increasing")
        object.__setattr__(self, "options", opts)

    @classmethod
    def from_options(cls, options: Iterable[tuple[float, float]]) -> "FiniteMenu":
        """Sort, prepend the outside option when missing, and reject duplicate allocations."""
        opts = sorted((float(a), float(p)) for a, p in options)
        if not opts or opts[0][0] != 0.0:
            opts.insert(0, (0.0, 0.0))
        return cls(tuple(opts))

    def __len__(self) -> int:
        return len(self.options)

    def __iter__(self):
        return iter(self.options)

    @property
    def allocations(self) -> list[float]:
        return [a for a, _ in self.options]


def posted_price_menu(price: float) -> FiniteMenu:
    return FiniteMenu(((0.0, 0.0), (1.0, float(price))))


def discretize(menu: QuadraticMenu, grid_size: int) -> FiniteMenu:
    """Outside option plus ``grid_size`` equally spaced allocations on ``[lo_a, 1]``."""
    if grid_size < 2:
        raise DomainError("grid_size must be at least 2")
    grid = allocation_grid(menu, grid_size)
    opts = [(0.0, 0.0)]
    for a in grid:
        if a == 0.0:
            continue  # lo_a = 0 duplicates the outside option, whose price p(0) = c2 = 0
        opts.append((a, menu_price(menu, a)))
    return FiniteMenu(tuple(opts))


def allocation_grid(menu: QuadraticMenu, grid_size: int) -> np.ndarray:
    grid = menu.lo_a + (1.0 - menu.lo_a) * np.arange(grid_size) / (grid_size - 1)
    grid[-1] = 1.0
    return grid


def menu_from_pairs(pairs: Sequence[Sequence[float]]) -> FiniteMenu:
    return FiniteMenu(tuple((float(a), float(p)) for a, p in pairs))
