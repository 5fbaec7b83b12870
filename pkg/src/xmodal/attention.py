"""Directional crossmodal attention.

Queries come from the target modality; keys and values from the source.
The score matrix softmax(Q K^T / sqrt(d_k)) is row-stochastic over source
steps, and the output has the target's length but lives in the value space
of the source.  Self-attention is the degenerate source == target case.

Single-sample inputs are [T, d]; batched inputs are [B, T, d] with an
optional boolean source mask [B, T_source] excluding padded source steps
(masked logits go to -inf before the softmax).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ops
from .errors import ConfigError, ContractError, DimensionError
from .layers import glorot_uniform
from .rng import Rng
from .tensor import Parameter, Tensor


@dataclass
class CrossmodalAttentionWeights:
    """Projections for one attention head: queries from the target feature
    space, keys/values from the source feature space."""

    w_q: Parameter  # [d_target, d_k]
    w_k: Parameter  # [d_source, d_k]
    w_v: Parameter  # [d_source, d_v]

    @classmethod
    def create(cls, d_target: int, d_source: int, d_k: int, d_v: int,
               rng: Rng, name: str) -> "CrossmodalAttentionWeights":
        return cls(
            w_q=Parameter(glorot_uniform(rng, (d_target, d_k), d_target, d_k), f"{name}.w_q"),
            w_k=Parameter(glorot_uniform(rng, (d_source, d_k), d_source, d_k), f"{name}.w_k"),
            w_v=Parameter(glorot_uniform(rng, (d_source, d_v), d_source, d_v), f"{name}.w_v"),
        )

    def parameters(self) -> list[Parameter]:
        return [self.w_q, self.w_k, self.w_v]


@dataclass
class AttentionMatrix:
    """Row-stochastic score matrix captured for inspection; entry (i, j) is
    the attention target step i gives source step j."""

    scores: np.ndarray                  # [T_target, T_source] or [B, ...]
    source_modality: str = "source"
    target_modality: str = "target"
    layer_index: int = -1
    head_index: int = 0
    logits: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class MultiHeadConfig:
    num_heads: int
    model_dim: int

    def __post_init__(self):
        if self.num_heads < 1:
            raise ConfigError(f"num_heads must be positive, got {self.num_heads}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )


def crossmodal_attention(
    x_target: Tensor,
    x_source: Tensor,
    w: CrossmodalAttentionWeights,
    source_mask: Optional[np.ndarray] = None,
) -> tuple[Tensor, AttentionMatrix]:
    """Single-head latent adaptation from source to target."""
    if x_target.shape[-1] != w.w_q.shape[0]:
        raise DimensionError.mismatch("crossmodal_attention/query", x_target.shape, w.w_q.shape)
    if x_source.shape[-1] != w.w_k.shape[0]:
        raise DimensionError.mismatch("crossmodal_attention/key", x_source.shape, w.w_k.shape)
    d_k = w.w_q.shape[1]
    q = ops.matmul(x_target, w.w_q)
    k = ops.matmul(x_source, w.w_k)
    v = ops.matmul(x_source, w.w_v)
    logits = ops.scale(ops.matmul(q, ops.transpose_last2(k)), 1.0 / np.sqrt(d_k))
    mask = None if source_mask is None else np.expand_dims(source_mask, -2)
    attn = ops.softmax_rows(logits, mask=mask)
    y = ops.matmul(attn, v)
    record = AttentionMatrix(scores=attn.data.copy(), logits=logits.data.copy())
    return y, record


def self_attention(
    x: Tensor,
    w: CrossmodalAttentionWeights,
    source_mask: Optional[np.ndarray] = None,
) -> tuple[Tensor, AttentionMatrix]:
    """Attention of a sequence over itself; no causal mask (sequence-level
    prediction, not generation)."""
    return crossmodal_attention(x, x, w, source_mask=source_mask)


class MultiHeadCrossmodalAttention:
    """h independent heads of width d/h, concatenated and passed through a
    final output projection back to the model width."""

    def __init__(self, d_target: int, d_source: int, model_dim: int,
                 num_heads: int, rng: Rng, name: str):
        cfg = MultiHeadConfig(num_heads, model_dim)
        head_dim = model_dim // num_heads
        self.config = cfg
        self.heads = [
            CrossmodalAttentionWeights.create(
                d_target, d_source, head_dim, head_dim, rng, f"{name}.head{i}"
            )
            for i in range(num_heads)
        ]
        self.w_out = Parameter(
            glorot_uniform(rng, (model_dim, model_dim), model_dim, model_dim), f"{name}.w_out"
        )
        self.b_out = Parameter(np.zeros(model_dim), f"{name}.b_out")

    def set_identity_output(self) -> None:
        """Make the output projection the identity (degenerate-case tests)."""
        self.w_out.data[...] = np.eye(self.w_out.shape[0])
        self.b_out.data[...] = 0.0

    def __call__(
        self,
        x_target: Tensor,
        x_source: Tensor,
        source_mask: Optional[np.ndarray] = None,
    ) -> tuple[Tensor, list[AttentionMatrix]]:
        outs = []
        records = []
        for i, head in enumerate(self.heads):
            y, rec = crossmodal_attention(x_target, x_source, head, source_mask=source_mask)
            rec.head_index = i
            outs.append(y)
            records.append(rec)
        stacked = outs[0] if len(outs) == 1 else ops.concat(outs, axis=-1)
        y = ops.add(ops.matmul(stacked, self.w_out), self.b_out)
        return y, records

    def parameters(self) -> list[Parameter]:
        params = []
        for head in self.heads:
            params.extend(head.parameters())
        params.extend([self.w_out, self.b_out])
        return params


def multi_head_crossmodal(
    x_target: Tensor,
    x_source: Tensor,
    mh: MultiHeadCrossmodalAttention,
    source_mask: Optional[np.ndarray] = None,
) -> tuple[Tensor, list[AttentionMatrix]]:
    return mh(x_target, x_source, source_mask=source_mask)


def apply_fixed_attention(
    attn: np.ndarray,
    x_source: Tensor,
    w: CrossmodalAttentionWeights,
    tol: float = 1e-6,
) -> Tensor:
    """Evaluate the attention output under an externally supplied score
    matrix, bypassing Q/K: Y = A (X_source W_V).

    The weighted sum is accumulated over source steps left to right so
    block-averaging matrices reproduce interval averaging bit for bit.
    """
    attn = np.asarray(attn, dtype=np.float64)
    if attn.ndim != 2:
        raise ContractError(f"apply_fixed_attention expects a 2D matrix, got {attn.shape}")
    if np.any(attn < 0) or np.any(np.abs(attn.sum(axis=1) - 1.0) > tol):
        raise ContractError("attention matrix must be row-stochastic")
    if attn.shape[1] != x_source.shape[0]:
        raise DimensionError.mismatch("apply_fixed_attention", attn.shape, x_source.shape)
    values = np.matmul(x_source.data, w.w_v.data)
    out = np.zeros((attn.shape[0], values.shape[1]))
    for j in range(attn.shape[1]):
        out += attn[:, j:j + 1] * values[j:j + 1, :]
    return Tensor(out)


def block_averaging_matrix(intervals: list[tuple[int, int]], t_source: int) -> np.ndarray:
    """Step-diagonal attention matrix that averages source steps over the
    half-open interval given for each target step (classical monotonic
    alignment as an attention special case)."""
    attn = np.zeros((len(intervals), t_source))
    for i, (start, stop) in enumerate(intervals):
        if not 0 <= start < stop <= t_source:
            raise ContractError(f"invalid interval ({start}, {stop}) for length {t_source}")
        attn[i, start:stop] = 1.0 / (stop - start)
    return attn
