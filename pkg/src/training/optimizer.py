"""Adam with L2 regularisation and a linear warm-up schedule."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import NumericError
from ..tensor_core.tensor import Tensor


@dataclass
class OptimState:
    base_lr: float = 1e-4
    peak_lr: float = 5e-4
    warmup_epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_coeff: float = 5e-4
    clip_norm: Optional[float] = None
    lr: Optional[float] = None
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr is None:
            self.lr = self.base_lr


def lr_at(epoch, state):
    """Linear ramp from base to peak over the warm-up epochs, then constant."""
    if state.warmup_epochs <= 0 or epoch >= state.warmup_epochs:
        return state.peak_lr
    return state.base_lr + (state.peak_lr - state.base_lr) * epoch / state.warmup_epochs


def _array(value):
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(_array(g), dtype=np.float64))) for g in grads.values())))


def adam_step(params, grads, state):
    """One bias-corrected Adam update; returns the new parameter map."""
    for name in params:
        if name not in grads:
            raise NumericError(f"missing gradient for parameter {name}")
        if not np.all(np.isfinite(_array(grads[name]))):
            raise NumericError(f"non-finite gradient for parameter {name}")

    scale = 1.0
    if state.clip_norm is not None:
        norm = global_norm(grads)
        if norm > state.clip_norm:
            scale = state.clip_norm / norm

    state.step += 1
    t = state.step
    updated = {}
    for name, param in params.items():
        theta = _array(param)
        g = _array(grads[name]) * scale + state.l2_coeff * theta
        m = state.first_moment.get(name, np.zeros_like(theta))
        v = state.second_moment.get(name, np.zeros_like(theta))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        updated[name] = Tensor(new.astype(theta.dtype))
    return updated
