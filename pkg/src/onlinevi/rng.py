"""Counter-based deterministic random numbers.

Every random quantity in this package is a pure function of
``(seed, stream label, counter)`` so that runs are bit-identical across
processes and platforms with IEEE-754 doubles.  The generator is the
splitmix64 finalizer applied at counter offsets:

    mix64(z):  z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27;  z *= 0x94D049BB133111EB
               z ^= z >> 31                     (all mod 2**64)

    base      = mix64(seed) XOR mix64(hash64(stream) * GOLDEN + 1)
    word(k)   = mix64(base + (k + 1) * GOLDEN)  for k = 0, 1, 2, ...

with GOLDEN = 0x9E3779B97F4A7C15.  ``hash64`` of an integer stream label
is the label itself mod 2**64; a string label is hashed with
blake2b(digest_size=8), little-endian.

Uniform doubles take the top 53 bits, offset by half a ulp so the open
interval (0, 1) is hit exactly:  u(k) = ((word(k) >> 11) + 0.5) * 2**-53.

Gaussians use the Box-Muller transform on consecutive uniform pairs:
with r = sqrt(-2 ln u1), the pair is (r cos(2 pi u2), r sin(2 pi u2)).
The 53-bit uniforms truncate the tails at about 8.6 standard deviations,
which is immaterial at the sample sizes used here.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64
_TWO_NEG53 = 2.0 ** -53


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def _hash64(label) -> np.uint64:
    if isinstance(label, (int, np.integer)):
        return _U64(int(label) & 0xFFFFFFFFFFFFFFFF)
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return _U64(int.from_bytes(digest, "little"))
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


def derive_seed(seed: int, *labels) -> int:
    """Derive a child seed from a parent seed and labels (e.g. a step index).

    Used for per-step Monte-Carlo seeds: every algorithm run under the same
    experiment seed receives the same seed at step t (common random numbers).
    """
    z = _U64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    for label in labels:
        with np.errstate(over="ignore"):
            z = _mix64(np.array([z + _hash64(label) * _GOLDEN + _U64(1)], dtype=np.uint64))[0]
    return int(z)


class CounterRng:
    """Stateful cursor over the counter stream defined in the module docstring.

    The state is only the integer counter; two instances with the same
    (seed, stream) produce the same values in the same order.
    """

    def __init__(self, seed: int, stream=0):
        seed_word = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        with np.errstate(over="ignore"):
            stream_word = np.array([_hash64(stream) * _GOLDEN + _U64(1)], dtype=np.uint64)
            self._base = np.uint64(_mix64(seed_word)[0] ^ _mix64(stream_word)[0])
        self._counter = 0

    def derive(self, label) -> "CounterRng":
        """Independent child stream; consumes no parent counters."""
        child = CounterRng.__new__(CounterRng)
        with np.errstate(over="ignore"):
            label_word = np.array([_hash64(label) * _GOLDEN + _U64(1)], dtype=np.uint64)
            base_word = np.array([self._base], dtype=np.uint64)
            child._base = np.uint64(_mix64(base_word)[0] ^ _mix64(label_word)[0])
        child._counter = 0
        return child

    def _words(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be nonnegative")
        k = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._base + k * _GOLDEN)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in the open interval (0, 1)."""
        return ((self._words(n) >> _U64(11)).astype(np.float64) + 0.5) * _TWO_NEG53

    def normals(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller."""
        if n == 0:
            return np.empty(0)
        m = (n + 1) // 2
        u1 = self.uniforms(m)
        u2 = self.uniforms(m)
        r = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(angle)
        out[1::2] = r * np.sin(angle)
        return out[:n]

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n integers uniform on {0, ..., bound-1} (53-bit slicing; the
        O(2**-53) modulo bias is irrelevant at our scales)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        vals = np.floor(self.uniforms(n) * bound).astype(np.int64)
        return np.minimum(vals, bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), one uniform per swap."""
        idx = np.arange(n)
        if n <= 1:
            return idx
        u = self.uniforms(n - 1)
        for pos, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[pos] * (i + 1)), i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
