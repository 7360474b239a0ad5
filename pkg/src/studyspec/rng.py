"""Version-pinned random streams.

All randomness in the package flows through :class:`Stream`, which draws raw
64-bit words from NumPy's PCG64 bit generator (whose output stream NumPy keeps
fixed across releases) and derives bounded integers, floats and shuffles
itself. Sub-seeds are the first 8 bytes of a BLAKE2b digest over the
``repr`` of the key parts, so a stream is a pure function of its key on every
platform.
"""

from __future__ import annotations

import hashlib
from typing import MutableSequence, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

_MASK64 = (1 << 64) - 1
_BATCH = 64


def derive_seed(*parts) -> int:
    """Hash ``parts`` into a 64-bit unsigned seed."""
    text = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class Stream:
    """Deterministic random stream over PCG64 raw output."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._bitgen = np.random.PCG64(self.seed)
        self._buf: list[int] = []

    @classmethod
    def derived(cls, *parts) -> "Stream":
        return cls(derive_seed(*parts))

    def next_u64(self) -> int:
        if not self._buf:
            self._buf = [int(x) for x in self._bitgen.random_raw(_BATCH)][::-1]
        return self._buf.pop()

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        self.shuffle(perm)
        return perm

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]

    def sample(self, n: int, k: int) -> list[int]:
        """``k`` distinct integers from [0, n), sorted ascending."""
        if k > n:
            raise ValueError("sample larger than population")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return sorted(pool[:k])
