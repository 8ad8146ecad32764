"""Portable deterministic randomness for shuffling, splitting and weight init.

Everything that must reproduce bit-for-bit across platforms (corpus splits,
interleaving, parameter initialization, epoch shuffles) draws from SplitMix64
rather than from a host RNG whose stream is implementation-defined.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator; 64-bit state, one multiply-xorshift per draw."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n); modulo bias is negligible for n << 2^64."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n


def shuffled(items: list, rng: SplitMix64) -> list:
    """Fisher-Yates shuffle of a copy of ``items``, driven by ``rng``.

    Walks i from n-1 down to 1 and swaps with a position in [0, i]; the swap
    index is ``rng.next_below(i + 1)``, so the permutation is a pure function
    of the generator state.
    """
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
