"""Seeded, splittable random streams.

The core generator is xoshiro256** (Blackman & Vigna, 2018) seeded through
SplitMix64, implemented on Python integers so the output sequence is fixed
by the algorithm alone and does not depend on the installed numpy version.

Child streams are derived with :meth:`Rng.split`, which hashes the parent
state together with a string label. Splitting never advances the parent,
so the results of one pipeline stage do not depend on how many draws an
earlier stage happened to make.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

MASK64 = (1 << 64) - 1
_TWO_NEG53 = 2.0 ** -53


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(x: int) -> tuple[int, int]:
    """One SplitMix64 step. Returns ``(new_state, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def _count(size) -> int:
    return int(np.prod(size)) if isinstance(size, tuple) else int(size)


def _shaped(values: list, size, dtype=np.float64) -> np.ndarray:
    return np.array(values, dtype=dtype).reshape(size)


class Rng:
    """xoshiro256** stream with the sampling helpers the package needs.

    Not thread-safe. Give each worker its own child from :meth:`split`.
    """

    __slots__ = ("seed", "_s")

    def __init__(self, seed: int = 0, *, state: tuple[int, int, int, int] | None = None):
        if not 0 <= int(seed) <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        if state is None:
            x = self.seed
            words = []
            for _ in range(4):
                x, out = splitmix64(x)
                words.append(out)
            state = tuple(words)
        if not any(state):
            raise ValueError("xoshiro256** state must not be all zero")
        self._s = list(state)

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, state={tuple(hex(w) for w in self._s)})"

    # -- raw stream ---------------------------------------------------------

    def next_u64(self) -> int:
        s = self._s
        s0, s1, s2, s3 = s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        s[0], s[1], s[2], s[3] = s0, s1, s2, s3
        return result

    def split(self, label: str) -> "Rng":
        """Child stream keyed by ``label``; the parent is not advanced."""
        h = hashlib.blake2b(digest_size=32, person=b"agrisynth-split")
        for w in self._s:
            h.update(w.to_bytes(8, "little"))
        h.update(str(label).encode("utf-8"))
        d = h.digest()
        words = tuple(int.from_bytes(d[i:i + 8], "little") for i in range(0, 32, 8))
        if not any(words):
            words = (1, 0, 0, 0)
        return Rng(self.seed, state=words)

    # -- scalar samplers ----------------------------------------------------

    def _random(self) -> float:
        return (self.next_u64() >> 11) * _TWO_NEG53

    def _normal(self) -> float:
        # Box-Muller, cosine branch only; 1 - u keeps the log argument in (0, 1].
        u1 = 1.0 - self._random()
        u2 = self._random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def _gamma(self, shape: float) -> float:
        # Marsaglia & Tsang (2000); shape < 1 via the u**(1/shape) boost.
        if shape < 1.0:
            u = 1.0 - self._random()
            return self._gamma(shape + 1.0) * u ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self._normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = 1.0 - self._random()
            if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
                return d * v

    def _below(self, n: int) -> int:
        limit = ((MASK64 + 1) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    # -- public samplers (numpy-like signatures) ----------------------------

    def random(self, size: int | tuple[int, ...] | None = None):
        """Uniform draws on [0, 1)."""
        if size is None:
            return self._random()
        return _shaped([self._random() for _ in range(_count(size))], size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size: int | tuple[int, ...] | None = None):
        if size is None:
            return low + (high - low) * self._random()
        return _shaped([low + (high - low) * self._random() for _ in range(_count(size))], size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size: int | tuple[int, ...] | None = None):
        if size is None:
            return loc + scale * self._normal()
        return _shaped([loc + scale * self._normal() for _ in range(_count(size))], size)

    def gamma(self, shape: float, scale: float = 1.0, size: int | tuple[int, ...] | None = None):
        if shape <= 0 or scale <= 0:
            raise ValueError("gamma shape and scale must be positive")
        if size is None:
            return scale * self._gamma(shape)
        return _shaped([scale * self._gamma(shape) for _ in range(_count(size))], size)

    def integers(self, n: int, size: int | tuple[int, ...] | None = None):
        """Uniform integers on ``[0, n)`` without modulo bias."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if size is None:
            return self._below(n)
        return _shaped([self._below(n) for _ in range(_count(size))], size, np.int64)

    def categorical(self, weights, size: int | tuple[int, ...] | None = None):
        """Indices drawn with probability proportional to ``weights``."""
        cum = np.cumsum(np.asarray(weights, dtype=float))
        total = cum[-1]

        def one() -> int:
            i = int(np.searchsorted(cum, self._random() * total, side="right"))
            return min(i, len(cum) - 1)

        if size is None:
            return one()
        return _shaped([one() for _ in range(_count(size))], size, np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        out = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self._below(i + 1)
            out[i], out[j] = out[j], out[i]
        return np.array(out, dtype=np.int64)


def rng_new(seed: int) -> Rng:
    return Rng(seed)


def rng_split(rng: Rng, label: str) -> Rng:
    return rng.split(label)
