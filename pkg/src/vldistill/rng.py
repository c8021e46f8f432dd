"""Seedable PRNG with a fixed, documented algorithm (xoshiro256**).

Used wherever output must be bit-reproducible across runs, platforms and
reimplementations: mixture shuffling and stratified sampling. The state
is seeded from a single 64-bit integer via splitmix64, as recommended by
the xoshiro authors.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """xoshiro256** 1.0, seeded with splitmix64."""

    def __init__(self, seed: int):
        self._s = []
        z = seed & MASK64
        for _ in range(4):
            z = (z + 0x9E3779B97F4A7C15) & MASK64
            t = z
            t = ((t ^ (t >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            t = ((t ^ (t >> 27)) * 0x94D049BB133111EB) & MASK64
            self._s.append(t ^ (t >> 31))

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = MASK64 - (MASK64 + 1) % n
        while True:
            r = self.next_u64()
            if r <= limit:
                return r % n

    def random(self) -> float:
        """Float in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k distinct items drawn uniformly without replacement, draw order."""
        if k > len(items):
            raise ValueError("sample larger than population")
        pool = list(items)
        out = []
        for _ in range(k):
            j = self.randbelow(len(pool))
            out.append(pool.pop(j))
        return out
