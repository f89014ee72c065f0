"""Deterministic, splittable pseudo-random generator.

Every seeded draw in this package (cohort simulation, parameter
initialization, dataset splits, epoch shuffles) goes through the
SplitMix64 generator below rather than a global or library RNG, so a
(seed, config) pair maps to one bit-reproducible stream.  The algorithm
and its constants are part of the on-disk config/model contract: do not
change them without bumping the file format version.

SplitMix64 reference: Steele, Lea & Flood, "Fast splittable pseudorandom
number generators" (the java.util.SplittableRandom mixer).
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Hash a base seed and a sequence of integer tags into a child seed.

    Used to give independent, reproducible streams to subsystems
    (e.g. per-epoch shuffles, per-ensemble-member training runs).
    """
    s = _mix64(seed)
    for tag in tags:
        s = _mix64(s ^ _mix64((tag + _GOLDEN) & _MASK64))
    return s


class SplitMix64:
    """Sequential SplitMix64 stream with uniform/normal/shuffle helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def split(self, tag: int) -> "SplitMix64":
        """Child stream keyed by (current seed, tag); does not advance self."""
        return SplitMix64(derive_seed(self._state, tag))

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        # 53-bit mantissa draw in [0, 1)
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> list[float]:
        return [self.uniform(low, high) for _ in range(n)]

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached for determinism."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so log(u1) is finite
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = radius * math.sin(theta)
        return radius * math.cos(theta)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) without modulo bias."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) - ((1 << 64) % bound)
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        indices = list(range(n))
        self.shuffle(indices)
        return indices
