"""SplitMix64 stream used for every random draw in the package.

The generator is tiny and fully specified, so a stream can be reproduced
from the seed alone in any language: ``state += 0x9E3779B97F4A7C15`` then
the usual xor-shift-multiply finalizer.  Uniform doubles take the top 53
bits; normal deviates use the cosine branch of Box-Muller (two uniforms
per deviate, ``u1`` taken from ``(0, 1]``).
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-style SplitMix64; draws are vectorized over numpy uint64."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, size: int) -> np.ndarray:
        steps = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * GOLDEN
            out = _mix(z)
        self.state = (self.state + size * int(GOLDEN)) & _MASK
        return out

    def uniform(self, size: int) -> np.ndarray:
        """Doubles in [0, 1)."""
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, size: int) -> np.ndarray:
        u = self.uniform(2 * size).reshape(size, 2)
        u1 = 1.0 - u[:, 0]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u[:, 1])

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``, swapping from the top down."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for t, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[t] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def derive_seed(seed: int, stream: int) -> int:
    """Independent child seed for a named sub-stream of a run."""
    z = np.array([(int(seed) + (stream + 1) * int(GOLDEN)) & _MASK], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return int(_mix(z)[0])
