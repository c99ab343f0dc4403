"""Dynamic pricing against a discounting buyer: menu-pricing simulation,
direct/indirect mechanism conversion and the two-type regret lower bound."""

from .core import Contract, DiscountSequence, Trajectory, prefix_utility, regret, revenue, summarize
from .errors import MechLabError

__all__ = [
    "Contract",
    "DiscountSequence",
    "MechLabError",
    "Trajectory",
    "prefix_utility",
    "regret",
    "revenue",
    "summarize",
]
__version__ = "0.1.0"
