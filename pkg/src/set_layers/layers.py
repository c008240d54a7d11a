"""Set-processing layers.

A volume set is a tensor ``(..., N, H, W, C)`` and a latent set is a tensor
``(..., N, C)``; axis ``-4`` (volumes) or ``-2`` (latents) indexes the set
members and any leading axes index independent sets. Every set-to-set layer
here is permutation-equivariant along the member axis, and the fusion layers
are permutation-invariant.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..tensor_core import ops
from ..tensor_core.nn import (
    ConvParams,
    activate,
    conv2d,
    dense,
    global_avg_pool,
    layer_norm,
    softmax,
)
from ..tensor_core.tensor import Tensor

MAX_HEAD_DIM = 64
ATTENTION_DROPOUT = 0.1


def head_geometry(width, heads=None):
    """Return ``(head_count, head_dim)`` for an attention of the given width."""
    if heads is not None:
        if heads < 1:
            raise ShapeError(f"head count must be >= 1, got {heads}")
        return heads, max(1, width // heads)
    head_dim = min(width, MAX_HEAD_DIM)
    return max(1, width // head_dim), head_dim


def stack_set(members):
    """Stack set members into one tensor, rejecting heterogeneous shapes."""
    arrays = [m.data if isinstance(m, Tensor) else np.asarray(m) for m in members]
    if not arrays:
        raise ShapeError("a set needs at least one member")
    first = arrays[0].shape
    for i, array in enumerate(arrays):
        if array.shape != first:
            raise ShapeError(f"set member {i} has shape {array.shape}, expected {first}")
    return Tensor(np.stack(arrays))


def _check_members(x, axis, name):
    if x.ndim < -axis or x.shape[axis] < 1:
        raise ShapeError(f"{name} needs a non-empty set, got shape {x.shape}")


@dataclass(frozen=True)
class MhsaParams:
    """Multi-head self-attention weights.

    ``query``, ``key`` and ``value`` are C × (h·d_h); head k uses columns
    ``k*d_h:(k+1)*d_h``. ``output`` is (h·d_h) × C_out. No additive biases.
    """

    query: Tensor
    key: Tensor
    value: Tensor
    output: Tensor
    head_count: int
    head_dim: int
    attn_dropout_p: float = 0.0

    def __post_init__(self):
        inner = self.head_count * self.head_dim
        if self.head_count < 1 or self.head_dim < 1:
            raise ShapeError("head count and head dim must be >= 1")
        width = self.query.shape[0]
        for name in ("query", "key", "value"):
            if getattr(self, name).shape != (width, inner):
                raise ShapeError(f"{name} projection has shape {getattr(self, name).shape}, expected {(width, inner)}")
        if self.output.shape[0] != inner:
            raise ShapeError(f"output projection has shape {self.output.shape}, expected ({inner}, C)")


def _split_heads(x, heads, dim):
    # (..., N, h*d) -> (..., h, N, d)
    lead = x.ndim - 2
    x = ops.reshape(x, x.shape[:-1] + (heads, dim))
    return ops.transpose(x, tuple(range(lead)) + (lead + 1, lead, lead + 2))


def _merge_heads(x):
    # (..., h, N, d) -> (..., N, h*d)
    lead = x.ndim - 3
    x = ops.transpose(x, tuple(range(lead)) + (lead + 1, lead, lead + 2))
    return ops.reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def mhsa(latents, params, training=False, rng=None):
    """Scaled dot-product self-attention over the set axis, no positional encoding."""
    _check_members(latents, -2, "mhsa")
    if latents.shape[-1] != params.query.shape[0]:
        raise ShapeError(f"mhsa input width {latents.shape[-1]} != projection width {params.query.shape[0]}")
    h, d = params.head_count, params.head_dim
    q = _split_heads(ops.matmul(latents, params.query), h, d)
    k = _split_heads(ops.matmul(latents, params.key), h, d)
    v = _split_heads(ops.matmul(latents, params.value), h, d)

    scores = ops.mul(ops.matmul(q, ops.swap_last(k)), 1.0 / math.sqrt(d))
    weights = softmax(scores)
    if training and params.attn_dropout_p > 0:
        if rng is None:
            raise ValueError("attention dropout in training mode needs an explicit rng")
        weights = ops.dropout(weights, params.attn_dropout_p, rng)
    context = _merge_heads(ops.matmul(weights, v))
    return ops.matmul(context, params.output)


@dataclass(frozen=True)
class SetConvParams:
    conv: ConvParams
    mhsa: MhsaParams
    activation: str = "relu"

    def __post_init__(self):
        cout = self.conv.kernel.shape[3]
        if self.mhsa.query.shape[0] != cout or self.mhsa.output.shape[1] != cout:
            raise ShapeError(f"attention width must equal conv output channels {cout}")


def setconv2d(volumes, params, training=False, rng=None):
    """SetConv2D block: shared conv, GAP, attention, context bias, activation."""
    _check_members(volumes, -4, "setconv2d")
    features = conv2d(volumes, params.conv)
    latents = global_avg_pool(features)
    context = mhsa(latents, params.mhsa, training=training, rng=rng)
    bias = ops.reshape(context, context.shape[:-1] + (1, 1, context.shape[-1]))
    return activate(ops.add(features, bias), params.activation)


def deepsets_layer(latents, rff_weight, rff_bias, activation="relu"):
    """rFF(S + mean(S)) row-wise."""
    _check_members(latents, -2, "deepsets_layer")
    pooled = ops.mean(latents, axis=-2, keepdims=True)
    return activate(dense(ops.add(latents, pooled), rff_weight, rff_bias), activation)


@dataclass(frozen=True)
class SabParams:
    mhsa: MhsaParams
    norm1_gain: Tensor
    norm1_shift: Tensor
    rff_weight: Tensor
    rff_bias: Tensor
    norm2_gain: Tensor
    norm2_shift: Tensor
    activation: str = "relu"


def sab(latents, params):
    """Set Attention Block: LayerNorm(H + rFF(H)), H = LayerNorm(S + MHSA(S))."""
    _check_members(latents, -2, "sab")
    hidden = layer_norm(
        ops.add(latents, mhsa(latents, params.mhsa)), params.norm1_gain, params.norm1_shift
    )
    ff = activate(dense(hidden, params.rff_weight, params.rff_bias), params.activation)
    return layer_norm(ops.add(hidden, ff), params.norm2_gain, params.norm2_shift)


def score_fusion(probs, tolerance=1e-5):
    """Average per-member class distributions into one set distribution."""
    _check_members(probs, -2, "score_fusion")
    sums = probs.data.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tolerance):
        raise ShapeError("score_fusion rows must be probability distributions")
    return ops.mean(probs, axis=-2)


@dataclass(frozen=True)
class LateFusionParams:
    gamma: Tensor
    beta: Tensor
    norm_gain: Tensor
    norm_shift: Tensor
    activation: str = "relu"


def late_fusion(latents, params):
    """σ(β + mean(S)·Γ) followed by layer normalisation."""
    _check_members(latents, -2, "late_fusion")
    pooled = ops.mean(latents, axis=-2)
    fused = activate(dense(pooled, params.gamma, params.beta), params.activation)
    return layer_norm(fused, params.norm_gain, params.norm_shift)
