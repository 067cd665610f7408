"""Counter-based deterministic random streams.

Every Monte Carlo trial gets its own stream derived from (seed, trial
index), so trials are order-insensitive and embarrassingly parallel:
aggregating trial results in any schedule gives bit-identical output.

The generator is SplitMix64 (Steele, Lea & Flood; the engine behind
Java's SplittableRandom): a 64-bit counter advanced by the golden-ratio
increment and finalized with a strong mixer.  It is small, portable, and
fast enough in pure Python to drive ~10^7 draws in seconds, which is the
regime this toolkit works in.
"""

from __future__ import annotations

from fractions import Fraction

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

_UNIT = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit avalanche mix."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_state(*parts: int) -> int:
    """Fold integers (seed, trial, salt, ...) into an initial stream state."""
    acc = 0x8C8FD6A3E1D9C1B5
    for p in parts:
        acc = mix64(acc ^ mix64((p + _GAMMA) & _MASK))
    return acc


class Stream:
    """A forkable SplitMix64 stream with an explicit integer cursor.

    The full generator state is the single integer ``state``; snapshotting
    and restoring it is how sample states record their position in the
    random stream.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int, trial: int = 0, salt: int = 0):
        self.state = derive_state(seed, trial, salt)

    @classmethod
    def from_state(cls, state: int) -> "Stream":
        s = cls.__new__(cls)
        s.state = state & _MASK
        return s

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return mix64(self.state)

    def next_unit(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _UNIT

    def next_bernoulli(self, p: Fraction) -> bool:
        """Exact-rational coin flip (granularity 2^-64).

        Compares one 64-bit draw against p via integer arithmetic, so the
        realized probability is within 2^-64 of the requested rational.
        """
        return self.next_u64() * p.denominator < p.numerator << 64

    def next_choice(self, cum_weights: list[tuple[object, Fraction]]) -> object:
        """Pick by cumulative rational weights (last entry must reach 1)."""
        u = self.next_u64()
        for item, cum in cum_weights:
            if u * cum.denominator < cum.numerator << 64:
                return item
        return cum_weights[-1][0]

    def next_bit(self) -> int:
        return self.next_u64() >> 63

    def fork(self, salt: int) -> "Stream":
        """Independent child stream; does not consume from this stream."""
        return Stream.from_state(derive_state(self.state, salt, 0x5EED))
