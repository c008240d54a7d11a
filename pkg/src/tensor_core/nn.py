"""Neural-network operations: convolution, pooling, dense maps, activations.

Spatial ops act on the trailing ``H×W×C`` axes and accept any number of
leading axes (set members, batches of sets).
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, record

LAYER_NORM_EPS = 1e-5
PADDINGS = ("same", "valid")


@dataclass(frozen=True)
class ConvParams:
    kernel: Tensor  # kH x kW x Cin x Cout
    bias: Tensor  # Cout
    stride: int = 1
    dilation: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.stride < 1 or self.dilation < 1:
            raise ShapeError(f"stride and dilation must be >= 1, got {self.stride}, {self.dilation}")
        if self.padding not in PADDINGS:
            raise ShapeError(f"unknown padding {self.padding!r}")
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[3],):
            raise ShapeError(f"kernel {self.kernel.shape} and bias {self.bias.shape} disagree")


def conv_output_size(size, kernel, stride, dilation, padding):
    """Output length along one axis plus the (before, after) padding."""
    span = dilation * (kernel - 1) + 1
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + span - size, 0)
        before = total // 2
        return out, before, total - before
    out = (size - span) // stride + 1
    if out < 1:
        raise ShapeError(f"valid convolution of length {size} with kernel span {span} is empty")
    return out, 0, 0


def conv2d(x, params):
    """Cross-correlate ``x`` (..., H, W, Cin) with a shared kernel."""
    kh, kw, cin, cout = params.kernel.shape
    if x.ndim < 3 or x.shape[-1] != cin:
        raise ShapeError(
            f"conv2d input shape {x.shape} does not match kernel shape {params.kernel.shape}"
        )
    lead = x.shape[:-3]
    h, w = x.shape[-3], x.shape[-2]
    s, d = params.stride, params.dilation
    ho, top, bottom = conv_output_size(h, kh, s, d, params.padding)
    wo, left, right = conv_output_size(w, kw, s, d, params.padding)

    xb = x.data.reshape((-1, h, w, cin))
    xp = np.pad(xb, ((0, 0), (top, bottom), (left, right), (0, 0)))
    windows = []
    for i in range(kh):
        for j in range(kw):
            r0, c0 = i * d, j * d
            windows.append(xp[:, r0 : r0 + s * (ho - 1) + 1 : s, c0 : c0 + s * (wo - 1) + 1 : s, :])
    cols = np.stack(windows, axis=3).reshape(-1, kh * kw * cin)
    kmat = params.kernel.data.reshape(kh * kw * cin, cout)
    out = (cols @ kmat + params.bias.data).reshape(lead + (ho, wo, cout))

    def grad_fn(g):
        g2 = g.reshape(-1, cout)
        gk = (cols.T @ g2).reshape(params.kernel.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ kmat.T).reshape(xb.shape[0], ho, wo, kh * kw, cin)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                r0, c0 = i * d, j * d
                gxp[:, r0 : r0 + s * (ho - 1) + 1 : s, c0 : c0 + s * (wo - 1) + 1 : s, :] += gcols[
                    :, :, :, i * kw + j, :
                ]
        gx = gxp[:, top : top + h, left : left + w, :].reshape(x.shape)
        return gx, gk, gb

    return record("conv2d", out, (x, params.kernel, params.bias), grad_fn)


def maxpool2d(x, pool):
    """Non-overlapping max pooling; trailing cells that do not fill a window are dropped."""
    if pool < 1:
        raise ShapeError(f"pool size must be >= 1, got {pool}")
    h, w, c = x.shape[-3:]
    ho, wo = h // pool, w // pool
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool {pool} empties spatial extent {h}x{w}")
    lead = x.shape[:-3]
    cropped = x.data.reshape((-1, h, w, c))[:, : ho * pool, : wo * pool, :]
    windows = (
        cropped.reshape(-1, ho, pool, wo, pool, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(-1, ho, wo, c, pool * pool)
    )
    # argmax returns the first maximum in row-major window order
    winner = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, winner[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gwin = np.zeros_like(windows)
        np.put_along_axis(gwin, winner[..., None], g.reshape(winner.shape)[..., None], axis=-1)
        gcrop = (
            gwin.reshape(-1, ho, wo, c, pool, pool)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(-1, ho * pool, wo * pool, c)
        )
        gx = np.zeros((cropped.shape[0], h, w, c), dtype=x.dtype)
        gx[:, : ho * pool, : wo * pool, :] = gcrop
        return (gx.reshape(x.shape),)

    return record("maxpool2d", out.reshape(lead + (ho, wo, c)), (x,), grad_fn)


def global_avg_pool(x):
    """Mean over the two spatial axes: (..., H, W, C) -> (..., C)."""
    if x.ndim < 3:
        raise ShapeError(f"global_avg_pool needs (..., H, W, C), got {x.shape}")
    h, w = x.shape[-3], x.shape[-2]
    out = x.data.mean(axis=(-3, -2))
    return record(
        "global_avg_pool",
        out,
        (x,),
        lambda g: (np.broadcast_to(g[..., None, None, :] / (h * w), x.shape),),
    )


def dense(x, weight, bias):
    """Affine map over the last axis: x @ weight + bias."""
    if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(
            f"dense input {x.shape} does not match weight {weight.shape} / bias {bias.shape}"
        )
    cin, cout = weight.shape
    out = x.data @ weight.data + bias.data

    def grad_fn(g):
        g2 = g.reshape(-1, cout)
        gx = (g @ weight.data.T).reshape(x.shape)
        gw = x.data.reshape(-1, cin).T @ g2
        return gx, gw, g2.sum(axis=0)

    return record("dense", out, (x, weight, bias), grad_fn)


def relu(x):
    mask = x.data > 0
    return record("relu", x.data * mask, (x,), lambda g: (g * mask,))


def relu6(x):
    mask = (x.data > 0) & (x.data < 6)
    return record("relu6", np.clip(x.data, 0, 6), (x,), lambda g: (g * mask,))


def sigmoid(x):
    z = x.data
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return record("sigmoid", out, (x,), lambda g: (g * out * (1 - out),))


def softmax(x):
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    return record(
        "softmax",
        out,
        (x,),
        lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),),
    )


def identity(x):
    return x


ACTIVATIONS = {
    "identity": identity,
    "relu": relu,
    "relu6": relu6,
    "sigmoid": sigmoid,
}


def activate(x, name):
    try:
        return ACTIVATIONS[name](x)
    except KeyError:
        raise ShapeError(f"unknown activation {name!r}") from None


def layer_norm(x, gain, shift, eps=LAYER_NORM_EPS):
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    if gain.shape != (x.shape[-1],) or shift.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm input {x.shape} vs gain {gain.shape} / shift {shift.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + shift.data

    def grad_fn(g):
        c = x.shape[-1]
        gxhat = g * gain.data
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        gg = (g * xhat).reshape(-1, c).sum(axis=0)
        gs = g.reshape(-1, c).sum(axis=0)
        return gx, gg, gs

    return record("layer_norm", out.astype(x.dtype), (x, gain, shift), grad_fn)
