"""Univariate slice sampling with randomised stepping out and shrinkage."""

from __future__ import annotations

import logging

import numpy as np

__all__ = ["slice_sample"]

logger = logging.getLogger(__name__)


def slice_sample(log_density, current, rng, width=1.0, max_stepouts=50):
    """One slice-sampling update of a scalar variable.

    The enclosing interval is grown by stepping out with a randomised budget
    split between the two sides, then shrunk towards the current point until
    a proposal lands inside the slice.  If 2 * max_stepouts shrink proposals
    all fail (a pathological target), the current point is returned and a
    warning logged rather than looping forever.
    """
    x0 = float(current)
    logf0 = float(log_density(x0))
    if not np.isfinite(logf0):
        raise ValueError("log density must be finite at the current point")
    log_slice = logf0 - rng.exponential()

    u = rng.random()
    left = x0 - width * u
    right = left + width
    grow_left = int(np.floor(max_stepouts * rng.random()))
    grow_right = (max_stepouts - 1) - grow_left
    while grow_left > 0 and log_density(left) > log_slice:
        left -= width
        grow_left -= 1
    while grow_right > 0 and log_density(right) > log_slice:
        right += width
        grow_right -= 1

    for _ in range(2 * max_stepouts):
        x1 = left + rng.random() * (right - left)
        if log_density(x1) > log_slice:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    logger.warning(
        "slice sampler: %d shrink proposals rejected; keeping current point %g",
        2 * max_stepouts,
        x0,
    )
    return x0
