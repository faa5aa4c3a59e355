"""Deterministic random streams.

Every random draw in the system comes from a SplitMix64 stream derived from
(seed, labels...).  The same generator is implemented in the compiled kernel
module, so motion planning produces bit-identical results on either backend,
and streams can be derived per (subtask, attempt) so parallel planning is
order-independent.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * _MIX1 & _MASK
    z = (z ^ (z >> 27)) * _MIX2 & _MASK
    return z ^ (z >> 31)


def stream_key(*parts) -> int:
    """Fold ints/strings into a 64-bit stream key (no builtin hash())."""
    h = 0x8E3C5A1D2B94F067
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            for i in range(0, len(data), 8):
                chunk = int.from_bytes(data[i : i + 8], "little")
                h = _mix64((h + _GAMMA) & _MASK) ^ chunk
        else:
            h = _mix64((h + _GAMMA) & _MASK) ^ (int(part) & _MASK)
        h &= _MASK
    return _mix64(h)


class SplitMix64:
    """Tiny counter-based PRNG; mirrored in the compiled kernels."""

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix64(self.state)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randrange(self, n: int) -> int:
        return self.next_u64() % n

    def gauss(self, sigma: float) -> float:
        # Box-Muller, one value per call (pair caching would make draw
        # counts depend on call history).
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def derive(seed: int, *labels) -> SplitMix64:
    """Independent stream for (seed, labels...)."""
    return SplitMix64(stream_key(seed, *labels))
