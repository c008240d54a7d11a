"""Central finite differences, the oracle for ``backward``."""

import numpy as np

from .tensor import Tensor


def _scalar(value):
    if isinstance(value, Tensor):
        return float(value.data.reshape(-1)[0])
    return float(value)


def finite_diff_grad(f, x, eps=1e-6):
    """Estimate df/dx element-wise as (f(x+εe) - f(x-εe)) / 2ε."""
    base = np.array(x.data if isinstance(x, Tensor) else x)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = _scalar(f(Tensor(base)))
        flat[i] = original - eps
        lower = _scalar(f(Tensor(base)))
        flat[i] = original
        out[i] = (upper - lower) / (2 * eps)
    return Tensor(grad)


def relative_error(a, b, floor=1e-8):
    """Element-wise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
