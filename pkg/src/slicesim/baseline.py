"""The traditional slice controller used as the comparison method.

Each user's slice type is known up front; the allocated rate is drawn
uniformly from the integers of that slice's decision range. A draw that does
not fit the remaining capacity blocks the user outright: no retry, no
handover, no state change.
"""

from __future__ import annotations

import numpy as np

from .domain import NetworkState, rbs_for_rate
from .planning import Outcome


def traditional_allocate(state: NetworkState, user: int, slice_kind: str,
                         rng: np.random.Generator) -> Outcome:
    """Admit ``user`` into its known slice at a uniformly drawn rate.

    The draw always happens (it is part of the seeded sequence) even when the
    user ends up blocked.
    """
    ledger = state.slices[slice_kind]
    lo, hi = ledger.config.decision_range.min, ledger.config.decision_range.max
    rate = int(rng.integers(lo, hi, endpoint=True))
    needed = rbs_for_rate(rate, ledger.config.rb_rate)
    if needed > ledger.free_rbs:
        return Outcome.rejected("capacity")
    state.admit_user(user, slice_kind, rate)
    return Outcome.admitted(slice_kind, rate, needed)
