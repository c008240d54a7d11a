"""Dense tensors and the reverse-mode differentiation tape.

A ``Tensor`` is an immutable numpy array plus an optional link into the
``Tape`` that produced it. Operations record themselves on the tape that is
active in the current context (``with Tape() as tape:``); without an active
tape, or when no input is tracked, they simply compute.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import NumericError, TapeError

_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)
_DEFAULT_DTYPE: ContextVar[type] = ContextVar("default_dtype", default=np.float32)
_DEBUG_CHECKS: ContextVar[bool] = ContextVar("debug_checks", default=False)


def default_dtype():
    return _DEFAULT_DTYPE.get()


@contextmanager
def float64_mode():
    """Create new tensors as 64-bit reals (gradient checks only)."""
    token = _DEFAULT_DTYPE.set(np.float64)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


@contextmanager
def debug_checks(enabled=True):
    """Reject NaN outputs produced from finite inputs."""
    token = _DEBUG_CHECKS.set(enabled)
    try:
        yield
    finally:
        _DEBUG_CHECKS.reset(token)


class Tensor:
    """Immutable N-dimensional array of reals."""

    __slots__ = ("data", "node_id", "tape")

    def __init__(self, data, dtype=None, node_id=None, tape=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = default_dtype()
        array = np.asarray(data, dtype=dtype).view()
        array.flags.writeable = False
        self.data = array
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return np.array(self.data)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype))

    def is_tracked_by(self, tape):
        return tape is not None and self.tape is tape and self.node_id is not None

    def __repr__(self):
        tracked = f", node={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tracked})"

    def __len__(self):
        return self.shape[0]

    # Arithmetic operators delegate to ``ops`` so they record on the tape.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)


def as_tensor(value, like=None):
    """Wrap ``value``; plain numbers adopt the dtype of ``like``."""
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor(np.asarray(value, dtype=like.dtype))
    return Tensor(value)


@dataclass
class TapeNode:
    node_id: int
    op: str
    parents: tuple
    saved: dict = field(default_factory=dict)
    backward: Optional[Callable] = None


class Tape:
    """Append-only record of one forward evaluation."""

    def __init__(self):
        self.nodes = []
        self.gradients = {}
        self.consumed = False
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def _append(self, op, parents, saved, backward):
        node = TapeNode(len(self.nodes), op, parents, saved or {}, backward)
        self.nodes.append(node)
        return node.node_id

    def watch(self, tensor):
        """Register ``tensor`` as a differentiable leaf of this tape."""
        tensor = as_tensor(tensor)
        node_id = self._append("leaf", (), None, None)
        return Tensor(tensor.data, node_id=node_id, tape=self)

    def gradient(self, tensor):
        if not tensor.is_tracked_by(self):
            raise TapeError(f"{tensor!r} is not recorded on this tape")
        grad = self.gradients.get(tensor.node_id)
        if grad is None:
            return Tensor(np.zeros(tensor.shape, dtype=tensor.dtype))
        return grad

    def reset(self):
        self.nodes = []
        self.gradients = {}
        self.consumed = False


def active_tape():
    return _ACTIVE_TAPE.get()


def record(op, data, parents, backward, saved=None):
    """Create the output tensor of ``op`` and record it when differentiable.

    ``backward`` maps the output gradient to one gradient per parent
    (``None`` for parents that need none).
    """
    data = np.asarray(data)
    if _DEBUG_CHECKS.get() and not np.all(np.isfinite(data)):
        if all(np.all(np.isfinite(p.data)) for p in parents):
            raise NumericError(f"{op} produced non-finite values from finite inputs")

    tape = _ACTIVE_TAPE.get()
    if tape is None or not any(p.is_tracked_by(tape) for p in parents):
        return Tensor(data)
    if tape.consumed:
        raise TapeError("tape was already consumed by backward")
    parent_ids = tuple(p.node_id if p.is_tracked_by(tape) else None for p in parents)
    node_id = tape._append(op, parent_ids, saved, backward)
    return Tensor(data, node_id=node_id, tape=tape)


def backward(tape, root, retain=False):
    """Propagate d(root)/d(node) to every node that ``root`` depends on.

    Returns ``tape.gradients`` (node id -> Tensor).
    """
    if tape.consumed:
        raise TapeError("tape was already consumed by backward")
    if root.size != 1:
        raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.is_tracked_by(tape):
        raise TapeError("root is not reachable from this tape")

    grads = {root.node_id: np.ones(root.shape, dtype=root.dtype)}
    for node in reversed(tape.nodes[: root.node_id + 1]):
        grad = grads.get(node.node_id)
        if grad is None or node.backward is None:
            continue
        parent_grads = node.backward(grad)
        for parent_id, parent_grad in zip(node.parents, parent_grads):
            if parent_id is None or parent_grad is None:
                continue
            if parent_id in grads:
                grads[parent_id] = grads[parent_id] + parent_grad
            else:
                grads[parent_id] = parent_grad

    tape.gradients = {
        node_id: Tensor(np.asarray(g, dtype=root.dtype)) for node_id, g in grads.items()
    }
    if not retain:
        for node in tape.nodes:
            node.saved = {}
            node.backward = None
        tape.consumed = True
    return tape.gradients
