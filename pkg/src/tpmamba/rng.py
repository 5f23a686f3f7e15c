"""Counter-based SplitMix64 generator.

All randomness in the package (weight init, patch sampling, augmentation)
draws from this generator so that a seed fully determines a run.  The whole
state is one 64-bit integer, which makes checkpoint/resume trivial.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int = 0):
        self.state = int(seed) & _MASK

    def uint64(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            out = _mix(np.uint64(self.state) + k * _GAMMA)
        self.state = (self.state + n * int(_GAMMA)) & _MASK
        return out

    def random(self, n: int) -> np.ndarray:
        """Uniform doubles in [0, 1) with 53 random bits."""
        return (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def integers(self, high: int, n: int = 1) -> np.ndarray:
        return (self.uint64(n) % np.uint64(high)).astype(np.int64)

    def normal(self, n: int) -> np.ndarray:
        # inverse-CDF keeps one uniform per sample; shift away from exactly zero
        u = (self.random(n) + 0.5 / (1 << 53))
        return ndtri(u)

    def trunc_normal(self, n: int, std: float, bound: float = 2.0) -> np.ndarray:
        """Normal(0, std) truncated to ``[-bound*std, bound*std]``."""
        lo, hi = ndtr(-bound), ndtr(bound)
        u = lo + (hi - lo) * (self.random(n) + 0.5 / (1 << 53))
        return std * ndtri(u)

    def spawn(self, tag: int) -> "SplitMix64":
        """Independent child stream derived from the current state and ``tag``."""
        with np.errstate(over="ignore"):
            z = _mix(np.array([np.uint64(self.state) ^ np.uint64(tag & _MASK)], dtype=np.uint64))
        return SplitMix64(int(z[0]))
