"""Training objectives for the three set tasks."""

import numpy as np

from ..errors import DataError
from ..tensor_core import ops
from ..tensor_core.tensor import Tensor

PROB_FLOOR = 1e-12


def _cross_entropy(probs, labels):
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = probs.shape[-1]
    if labels.shape != probs.shape[:-1]:
        raise DataError(f"labels shape {labels.shape} does not match predictions {probs.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"label out of range for {num_classes} classes")
    onehot = Tensor(np.eye(num_classes, dtype=probs.dtype)[labels])
    picked = ops.sum(ops.mul(probs, onehot), axis=-1)
    return ops.neg(ops.mean(ops.log(ops.clip(picked, PROB_FLOOR, 1.0))))


def cic_loss(probs, labels):
    """Mean cross-entropy over every image: probs (..., N, K), labels (..., N)."""
    return _cross_entropy(probs, labels)


def sc_loss(probs, labels):
    """Mean cross-entropy over sets: probs (..., K), labels (...)."""
    return _cross_entropy(probs, labels)


def anomaly_loss(probs, flags):
    """Mean binary cross-entropy over images: probs (..., N), flags (..., N)."""
    flags = np.asarray(flags)
    if flags.shape != probs.shape:
        raise DataError(f"flags shape {flags.shape} does not match predictions {probs.shape}")
    if flags.size and not np.all((flags == 0) | (flags == 1)):
        raise DataError("anomaly flags must be binary")
    target = Tensor(flags.astype(probs.dtype))
    p = ops.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    positive = ops.mul(target, ops.log(p))
    negative = ops.mul(ops.sub(1.0, target), ops.log(ops.sub(1.0, p)))
    return ops.neg(ops.mean(ops.add(positive, negative)))
