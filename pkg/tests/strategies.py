"""Shared hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st

from pshaping.pmf import Pmf


def pmfs(size: int, min_mass: float = 0.0):
    """Random PMFs of a fixed size; entries are at least ``min_mass`` before renormalizing."""
    return st.lists(st.floats(min_value=min_mass, max_value=1.0, allow_nan=False),
                    min_size=size, max_size=size).filter(lambda w: sum(w) > 1e-3).map(
        lambda w: Pmf.from_weights(np.asarray(w)))


def symmetric_pmfs(levels: int, min_mass: float = 1e-3):
    return st.lists(st.floats(min_value=min_mass, max_value=1.0, allow_nan=False),
                    min_size=levels // 2, max_size=levels // 2).map(Pmf.symmetric)
