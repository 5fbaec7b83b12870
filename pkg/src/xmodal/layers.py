"""Building blocks below the attention level.

Temporal convolution projects each modality to the common model width while
mixing a k-wide neighbourhood; the sinusoidal position table injects order
information that pure attention lacks; layer norm, a positionwise
feed-forward sublayer and inverted dropout complete the kit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .rng import Rng
from .tensor import Parameter, Tensor


def glorot_uniform(rng: Rng, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(shape, -limit, limit)


def positional_embedding(t_len: int, d: int) -> np.ndarray:
    """Fixed sinusoidal position table [t_len, d].

    pe[i, 2j] = sin(i / 10000^(2j/d)), pe[i, 2j+1] = cos(i / 10000^(2j/d)),
    positions starting at 0.  Entries are bounded in [-1, 1] and the table
    is not trained.
    """
    if t_len < 1 or d < 1:
        raise ConfigError(f"positional_embedding needs t_len, d >= 1, got {t_len}, {d}")
    pos = np.arange(t_len, dtype=np.float64)[:, None]
    two_j = np.arange(0, d, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, two_j / d)
    pe = np.empty((t_len, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d // 2])
    return pe


class TemporalConvLayer:
    """Same-padding 1D convolution over time; output length equals input
    length, features projected from in_dim to out_dim."""

    def __init__(self, kernel_size: int, in_dim: int, out_dim: int, rng: Rng, name: str):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError(f"{name}: kernel size must be odd and positive, got {kernel_size}")
        self.kernel_size = kernel_size
        self.in_dim = in_dim
        self.out_dim = out_dim
        fan = kernel_size * in_dim, kernel_size * out_dim
        self.weight = Parameter(
            glorot_uniform(rng, (kernel_size, in_dim, out_dim), *fan), f"{name}.weight"
        )
        self.bias = Parameter(np.zeros(out_dim), f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d_same(x, self.weight, self.bias)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


def temporal_conv(x: Tensor, layer: TemporalConvLayer) -> Tensor:
    return layer(x)


class LayerNorm:
    def __init__(self, dim: int, name: str, eps: float = 1e-5):
        if eps <= 0:
            raise ConfigError(f"{name}: layer norm epsilon must be positive, got {eps}")
        self.eps = eps
        self.gain = Parameter(np.ones(dim), f"{name}.gain")
        self.shift = Parameter(np.zeros(dim), f"{name}.shift")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.shift, self.eps)

    def parameters(self) -> list[Parameter]:
        return [self.gain, self.shift]


def layer_norm(x: Tensor, params: LayerNorm) -> Tensor:
    return params(x)


class FeedForward:
    """Positionwise two-layer ReLU MLP; input and output widths match so the
    result can be added residually."""

    def __init__(self, dim: int, hidden: int, rng: Rng, name: str):
        self.w1 = Parameter(glorot_uniform(rng, (dim, hidden), dim, hidden), f"{name}.w1")
        self.b1 = Parameter(np.zeros(hidden), f"{name}.b1")
        self.w2 = Parameter(glorot_uniform(rng, (hidden, dim), hidden, dim), f"{name}.w2")
        self.b2 = Parameter(np.zeros(dim), f"{name}.b2")

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.relu(ops.add(ops.matmul(x, self.w1), self.b1))
        return ops.add(ops.matmul(h, self.w2), self.b2)

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


def feed_forward(x: Tensor, f: FeedForward) -> Tensor:
    if x.shape[-1] != f.w1.shape[0]:
        raise DimensionError.mismatch("feed_forward", x.shape, f.w1.shape)
    return f(x)


@dataclass
class DropoutSpec:
    """Dropout rate plus mode; eval mode is the identity."""

    rate: float
    training: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")


def dropout(x: Tensor, spec: DropoutSpec, rng: Rng | None = None) -> Tensor:
    return ops.dropout(x, spec.rate, spec.training, rng)
