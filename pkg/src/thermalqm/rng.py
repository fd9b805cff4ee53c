"""Seeded random streams.

Every stochastic routine draws from a Philox generator (counter based,
64-bit words).  ``stream`` occupies the high word of the 128-bit key, so
trajectory ``i`` of a run seeded with ``seed`` always sees the same
numbers no matter how trajectories are scheduled.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def split(seed: int, n: int, offset: int = 0) -> list[np.random.Generator]:
    """``n`` independent generators for streams ``offset .. offset + n - 1``."""
    return [make_rng(seed, offset + i) for i in range(n)]
