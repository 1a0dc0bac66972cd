"""SplitMix64 pseudorandom stream.

Every random draw in the toolkit (patient shuffles, synthetic ensembles) comes
from this generator so that results are reproducible across implementations.
The generator state is a single 64-bit word; output ``i`` (1-based) for seed
``s`` is ``mix(s + i * 0x9E3779B97F4A7C15 mod 2**64)``. Because each output is
a pure function of its index, long runs are produced in bulk with numpy.
"""

from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


class SplitMix64:
    """Sequential SplitMix64 generator with numpy bulk draws.

    >>> g = SplitMix64(1234567)
    >>> g.next_u64()
    6457827717110365317
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.position = 0  # number of outputs consumed

    def next_u64(self) -> int:
        self.position += 1
        z = (self.seed + self.position * GOLDEN_GAMMA) & _MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def u64_array(self, n: int) -> np.ndarray:
        """Next ``n`` outputs as a uint64 array (same values as ``n`` calls to next_u64)."""
        idx = np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
        self.position += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1): top 53 bits of each output times 2**-53."""
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def standard_normal(self, n: int) -> np.ndarray:
        """Box-Muller (cosine branch only): two uniforms per normal draw.

        The first uniform ``u`` of each pair enters as ``1 - u`` so the log
        argument stays in (0, 1].
        """
        u = self.uniform(2 * n).reshape(n, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        return radius * np.cos(2.0 * np.pi * u[:, 1])

    def below(self, bound: int) -> int:
        """Integer in [0, bound) by 64x64->128 multiply-shift."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return (self.next_u64() * bound) >> 64

    def shuffle(self, items: list) -> list:
        """Fisher-Yates, swapping index i with below(i + 1) for i = len-1 .. 1."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out
