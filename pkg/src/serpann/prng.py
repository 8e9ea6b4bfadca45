"""Portable 64-bit PRNG: xoshiro256** seeded through splitmix64.

Every random decision in the package (dataset shuffles, SpecAugment masks,
dropout masks, weight init) draws from this generator so that a seed gives
the same stream on every platform.  Bulk fills are compiled with numba; the
scalar path uses the same kernels so both routes advance one shared state.

Draw conventions:

* ``next_u64`` -- one raw xoshiro256** output.
* ``random`` -- ``(u64 >> 11) * 2**-53``, a double in [0, 1).
* ``randint(lo, hi)`` -- inclusive bounds, unbiased via rejection of the
  lowest ``2**64 mod span`` raw values, then ``raw % span``.
"""

import numpy as np
from numba import njit

_MASK = (1 << 64) - 1


def splitmix64(x):
    """Return ``(next_state, output)`` of one splitmix64 step."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _next(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@njit(cache=True)
def _fill_unit(s, out):
    scale = 1.0 / 9007199254740992.0
    for i in range(out.shape[0]):
        out[i] = float(_next(s) >> np.uint64(11)) * scale


class Prng:
    """xoshiro256** generator.  Not thread-safe: one handle per thread."""

    def __init__(self, seed):
        seed = int(seed) & _MASK
        words = []
        x = seed
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self.seed = seed
        self._s = np.array(words, dtype=np.uint64)

    def next_u64(self):
        return int(_next(self._s))

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo, hi):
        """Uniform integer in ``[lo, hi]`` (both inclusive)."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        if span > _MASK:
            return lo + self.next_u64()
        threshold = ((1 << 64) - span) % span
        while True:
            r = self.next_u64()
            if r >= threshold:
                return lo + r % span

    def shuffle(self, items):
        """Fisher-Yates shuffle in place, walking from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
        return items

    def uniform(self, low, high, size):
        """Array of doubles uniform in ``[low, high)`` drawn in row-major order."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        out = np.empty(int(np.prod(shape, dtype=np.int64)), dtype=np.float64)
        _fill_unit(self._s, out)
        return (low + (high - low) * out).reshape(shape)

    def u64_array(self, n):
        out = np.empty(n, dtype=np.uint64)
        _fill_u64(self._s, out)
        return out

    def spawn(self):
        """Child generator seeded from the next raw output of this one."""
        return Prng(self.next_u64())

    def getstate(self):
        return tuple(int(w) for w in self._s)

    def setstate(self, state):
        self._s = np.array(state, dtype=np.uint64)
