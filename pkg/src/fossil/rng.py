"""Seeded PCG32 generator.

Every random choice in this package (parameter init, triple sampling) flows
through this generator so that runs are bit-for-bit replayable across numpy
and numba versions.  The algorithm is the standard PCG-XSH-RR 64/32 ("pcg32")
linear congruential generator with output permutation; the name is recorded
in training traces.

State is a 2-element uint64 array (state, increment) so the same jitted
functions can be called from Python and from inside numba kernels.
"""

import numpy as np
from numba import njit

RNG_NAME = "pcg32"

_PCG_MULT = np.uint64(6364136223846793005)


@njit(cache=True)
def pcg32_init(seed, stream):
    """Return a fresh (state, inc) pair for the given seed and stream id."""
    st = np.empty(2, dtype=np.uint64)
    st[1] = (np.uint64(stream) << np.uint64(1)) | np.uint64(1)
    st[0] = np.uint64(0)
    _pcg32_next(st)
    st[0] = st[0] + np.uint64(seed)
    _pcg32_next(st)
    return st


@njit(cache=True)
def _pcg32_next(st):
    """Advance state and return the next uint32."""
    old = st[0]
    st[0] = old * _PCG_MULT + st[1]
    xorshifted = np.uint32(((old >> np.uint64(18)) ^ old) >> np.uint64(27))
    rot = np.uint32(old >> np.uint64(59))
    return np.uint32(
        (xorshifted >> rot) | (xorshifted << ((np.uint32(0) - rot) & np.uint32(31)))
    )


@njit(cache=True)
def pcg32_uniform(st):
    """Uniform float64 in [0, 1)."""
    return np.float64(_pcg32_next(st)) * (1.0 / 4294967296.0)


@njit(cache=True)
def pcg32_randint(st, n):
    """Uniform integer in [0, n) via the multiply-shift map.

    The map carries a bias of order n / 2**32, negligible for the index
    ranges used here (items, users, positions).
    """
    return np.int64((np.uint64(_pcg32_next(st)) * np.uint64(n)) >> np.uint64(32))


@njit(cache=True)
def pcg32_fill_uniform(st, out, low, high):
    """Fill a flat float64 array with uniform draws from [low, high)."""
    span = high - low
    for i in range(out.size):
        out[i] = low + span * pcg32_uniform(st)


class Pcg32:
    """Thin stateful wrapper around the jitted pcg32 functions."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.state = pcg32_init(seed, stream)

    def uniform(self) -> float:
        return float(pcg32_uniform(self.state))

    def randint(self, n: int) -> int:
        return int(pcg32_randint(self.state, n))

    def uniform_array(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        pcg32_fill_uniform(self.state, out, low, high)
        return out
