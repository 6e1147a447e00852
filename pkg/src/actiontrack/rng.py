"""xoshiro256** pseudo-random generator seeded through splitmix64.

Both algorithms are fully specified by their reference C implementations
(Blackman & Vigna), so any implementation reproduces the same stream:

* the 256-bit state is four successive splitmix64 outputs of the 64-bit seed;
* ``uniform()`` is ``(next() >> 11) * 2**-53``;
* ``normal()`` uses the Box-Muller transform on ``u1 = 1 - uniform()``,
  ``u2 = uniform()`` and returns ``sqrt(-2 ln u1) cos(2 pi u2)`` (the sine
  branch is discarded so every call consumes exactly two draws).
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1


def splitmix64(state: int):
    """Return ``(output, new_state)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    def __init__(self, seed: int = 0, state=None):
        if state is not None:
            self.s = [int(v) & MASK64 for v in state]
        else:
            sm = int(seed) & MASK64
            self.s = []
            for _ in range(4):
                out, sm = splitmix64(sm)
                self.s.append(out)
        if not any(self.s):
            raise ValueError("xoshiro256 state must not be all zero")

    def next(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next() >> 11) * (1.0 / (1 << 53)))

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
