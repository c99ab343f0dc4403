import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mechlab.buyer import MechanismTree, TreeNode
from mechlab.core import DiscountSequence
from mechlab.direct_mech import DirectMechanism
from mechlab.menus import FiniteMenu

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "thorough", deadline=None, max_examples=600, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def half_seq():
    return DiscountSequence((1.0, 0.5))


@pytest.fixture
def two_type(half_seq):
    """{0.5, 1.0} with gamma (1, 0.5): low type buys once at 0.5, high type twice at 2/3."""
    mech = DirectMechanism(
        (0.5, 1.0),
        np.array([[1.0, 0.0], [1.0, 1.0]]),
        np.array([[0.5, 0.0], [2 / 3, 2 / 3]]),
    )
    return mech, half_seq


def random_tree(rng, T, max_branch=4, alloc_levels=10):
    """Random finite tree of depth T; option (0, 0) sometimes ends the game."""

    def node(d):
        k = int(rng.integers(1, max_branch + 1))
        allocs = np.sort(rng.choice(np.arange(1, alloc_levels + 1) / alloc_levels, size=k, replace=False))
        pays = np.sort(rng.uniform(0.0, 1.0, size=k)) * allocs
        menu = FiniteMenu(((0.0, 0.0),) + tuple(zip(allocs.tolist(), pays.tolist())))
        children = {}
        if d + 1 < T:
            for i in range(len(menu)):
                if i == 0 and rng.random() < 0.5:
                    continue
                children[i] = node(d + 1)
        return TreeNode(menu, children)

    return MechanismTree(node(0), T)
