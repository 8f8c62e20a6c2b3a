"""Deterministic seeded randomness, dense linear algebra, and activations.

Everything here is 64-bit float. The random stream is a counter-based
SplitMix64 generator (documented below) so that identical seeds give
bit-identical streams on every platform and every run.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SeededRng:
    """Counter-based SplitMix64 stream with Box-Muller normals.

    The i-th raw word (i = 0, 1, ...) is::

        state = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2^64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2^64
        word = z ^ (z >> 31)

    Uniform doubles take the top 53 bits: u = (word >> 11) * 2^-53, so
    u is in [0, 1).  Standard normals are produced by the Box-Muller
    transform on consecutive uniform pairs (u1 shifted into (0, 1] to
    keep log finite); a request for n normals always consumes
    2 * ceil(n / 2) words.  The stream depends only on the seed and the
    sequence of calls, never on platform or numpy version.

    Instances are single-owner: hand them off, do not share.
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(int(seed) & _MASK64)
        self._pos = 0

    @property
    def position(self) -> int:
        """Number of raw 64-bit words consumed so far."""
        return self._pos

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self._pos + 1, self._pos + n + 1, dtype=np.uint64)
        self._pos += n
        z = self._seed + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        if n < 0:
            raise ValueError("n must be >= 0")
        return (self._words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """n draws from N(0, 1) via Box-Muller."""
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0:
            return np.empty(0)
        pairs = (n + 1) // 2
        w = self._words(2 * pairs)
        mant = (w >> np.uint64(11)).astype(np.float64)
        u1 = (mant[:pairs] + 1.0) * 2.0**-53  # (0, 1]: log stays finite
        u2 = mant[pairs:] * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return out[:n]

    def uniform_range(self, lo: float, hi: float, n: int) -> np.ndarray:
        return lo + (hi - lo) * self.uniform(n)

    def integer(self, bound: int) -> int:
        """One integer uniform on [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return min(int(self.uniform(1)[0] * bound), bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        out = np.arange(n)
        if n > 1:
            u = self.uniform(n - 1)
            for i in range(n - 1, 0, -1):
                j = min(int(u[n - 1 - i] * (i + 1)), i)
                out[i], out[j] = out[j], out[i]
        return out

    def coin(self, p: float) -> bool:
        """Single Bernoulli(p) draw."""
        return bool(self.uniform(1)[0] < p)


def sample_standard_normal(rng: SeededRng, n: int) -> np.ndarray:
    """n independent N(0, 1) draws from the given stream."""
    return rng.normal(n)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with shape validation."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1:
        raise ValueError(f"matvec expects a matrix and a vector, got {m.shape} and {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix is {m.shape}, vector has length {v.shape[0]}")
    out = m @ v
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matvec produced non-finite entries")
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically safe logistic function; saturates to 0/1 without overflow.

    Branches on sign so exp never sees a positive argument; preserves
    the input float dtype.
    """
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise activation, kind in {'sigmoid', 'tanh'}."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def uniform_init(rng: SeededRng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Weights uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    bound = 1.0 / np.sqrt(fan_in)
    n = int(np.prod(shape)) if shape else 1
    return rng.uniform_range(-bound, bound, n).reshape(shape)
