"""Deterministic random number generation.

All stochastic behaviour in the package (weight init, dropout, data
synthesis, shuffling) draws from :class:`Rng`, a counter-based SplitMix64
generator.  Counter-based means the i-th draw is a pure function of
(seed, i), so arbitrarily large blocks can be produced with vectorised
uint64 arithmetic and the stream is bit-identical across platforms and
numpy versions.  `child(key)` derives an independent stream, used to
partition the seed space (e.g. one stream per generated sample).
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DOUBLE_SCALE = float(2.0**-53)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    z = (x + _GAMMA).astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """Counter-based SplitMix64 stream with 64-bit state."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def child(self, key: int) -> "Rng":
        """Derive an independent stream; same (seed, key) gives the same stream."""
        with np.errstate(over="ignore"):
            mixed = _splitmix64(
                np.array([self._seed ^ _splitmix64(np.array([key], dtype=np.uint64))[0]],
                         dtype=np.uint64)
            )[0]
        return Rng(int(mixed))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter, self._counter + n, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _splitmix64(self._seed ^ _splitmix64(idx))

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform f64 draws in [low, high)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE
        out = low + (high - low) * u
        return out.reshape(shape) if shape else float(out[0])

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        """Gaussian draws via Box-Muller on paired uniforms."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = (self._raw(2 * m) >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE
        u1 = np.maximum(u[:m], 2.0**-53)  # avoid log(0)
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        out = std * z
        return out.reshape(shape) if shape else float(out[0])

    def integer(self, high: int) -> int:
        """A single integer in [0, high). Uses 53-bit uniforms; fine for desk-scale ranges."""
        return int(self.uniform() * high) % high

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integer(i + 1)
            items[i], items[j] = items[j], items[i]
