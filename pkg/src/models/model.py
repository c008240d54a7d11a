"""Model construction from a ``ModelSpec`` and the forward pass."""

import math

import numpy as np

from ..errors import ShapeError
from ..set_layers import (
    ATTENTION_DROPOUT,
    LateFusionParams,
    MhsaParams,
    SabParams,
    SetConvParams,
    deepsets_layer,
    head_geometry,
    late_fusion,
    sab,
    score_fusion,
    setconv2d,
)
from ..tensor_core import ops
from ..tensor_core.nn import (
    ConvParams,
    activate,
    conv2d,
    dense,
    global_avg_pool,
    maxpool2d,
    sigmoid,
    softmax,
)
from ..tensor_core.tensor import Tensor
from .spec import infer_shapes, validate


def param_name(index, kind, name):
    return f"{index:02d}.{kind}.{name}"


def _fan_in_uniform(rng, shape, fan_in):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _fan_avg_uniform(rng, shape):
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _zeros(*shape):
    return np.zeros(shape, dtype=np.float32)


def _ones(*shape):
    return np.ones(shape, dtype=np.float32)


def _mhsa_arrays(rng, width, heads):
    count, dim = head_geometry(width, heads)
    inner = count * dim
    return {
        "query": _fan_avg_uniform(rng, (width, inner)),
        "key": _fan_avg_uniform(rng, (width, inner)),
        "value": _fan_avg_uniform(rng, (width, inner)),
        "output": _fan_avg_uniform(rng, (inner, width)),
    }


def _layer_arrays(rng, layer, in_shape):
    """Freshly initialised parameters of one layer, in a fixed order."""
    if layer.kind in ("conv2d", "setconv2d"):
        cin = in_shape[-1]
        k = layer.kernel
        arrays = {
            "kernel": _fan_in_uniform(rng, (k, k, cin, layer.filters), k * k * cin),
            "bias": _zeros(layer.filters),
        }
        if layer.kind == "setconv2d":
            arrays.update(_mhsa_arrays(rng, layer.filters, layer.heads))
        return arrays
    if layer.kind in ("dense", "deepsets"):
        cin = in_shape[-1]
        return {
            "weight": _fan_in_uniform(rng, (cin, layer.out_width), cin),
            "bias": _zeros(layer.out_width),
        }
    if layer.kind == "sab":
        width = in_shape[-1]
        arrays = _mhsa_arrays(rng, width, layer.heads)
        arrays.update(
            {
                "norm1_gain": _ones(width),
                "norm1_shift": _zeros(width),
                "rff_weight": _fan_in_uniform(rng, (width, width), width),
                "rff_bias": _zeros(width),
                "norm2_gain": _ones(width),
                "norm2_shift": _zeros(width),
            }
        )
        return arrays
    if layer.kind == "late_fusion":
        cin = in_shape[-1]
        return {
            "gamma": _fan_in_uniform(rng, (cin, layer.out_width), cin),
            "beta": _zeros(layer.out_width),
            "norm_gain": _ones(layer.out_width),
            "norm_shift": _zeros(layer.out_width),
        }
    return {}


def build(spec, seed=0):
    """Validate ``spec`` and initialise its parameters deterministically from ``seed``."""
    validate(spec)
    rng = np.random.default_rng(seed)
    shapes = infer_shapes(spec)
    parameters = {}
    in_shape = tuple(spec.input_shape)
    for index, layer in enumerate(spec.layers):
        for name, array in _layer_arrays(rng, layer, in_shape).items():
            parameters[param_name(index, layer.kind, name)] = Tensor(array)
        in_shape = shapes[index]
    return Model(spec, parameters)


class Model:
    """A built network: its spec plus named parameter tensors."""

    def __init__(self, spec, parameters, attention_dropout=ATTENTION_DROPOUT):
        self.spec = spec
        self.parameters = dict(parameters)
        self.attention_dropout = attention_dropout

    @property
    def param_count(self):
        return int(sum(t.size for t in self.parameters.values()))

    @property
    def head_mode(self):
        return self.spec.head_mode

    @property
    def dtype(self):
        return next(iter(self.parameters.values())).dtype if self.parameters else np.float32

    def with_parameters(self, parameters):
        return Model(self.spec, parameters, self.attention_dropout)

    def astype(self, dtype):
        return self.with_parameters({k: v.astype(dtype) for k, v in self.parameters.items()})

    def layer_indices(self, *kinds):
        return [i for i, layer in enumerate(self.spec.layers) if layer.kind in kinds]

    # ------------------------------------------------------------------

    def _mhsa(self, p, index, kind, width, heads, dropout):
        count, dim = head_geometry(width, heads)
        return MhsaParams(
            query=p[param_name(index, kind, "query")],
            key=p[param_name(index, kind, "key")],
            value=p[param_name(index, kind, "value")],
            output=p[param_name(index, kind, "output")],
            head_count=count,
            head_dim=dim,
            attn_dropout_p=dropout,
        )

    def _apply(self, index, layer, x, p, training, rng):
        kind = layer.kind

        def get(name):
            return p[param_name(index, kind, name)]

        if kind in ("conv2d", "setconv2d"):
            conv = ConvParams(get("kernel"), get("bias"), layer.stride, layer.dilation, layer.padding)
            if kind == "conv2d":
                return activate(conv2d(x, conv), layer.activation)
            mhsa_params = self._mhsa(p, index, kind, layer.filters, layer.heads, self.attention_dropout)
            return setconv2d(x, SetConvParams(conv, mhsa_params, layer.activation), training, rng)
        if kind == "maxpool":
            return maxpool2d(x, layer.pool)
        if kind == "gap":
            return global_avg_pool(x)
        if kind == "dense":
            return activate(dense(x, get("weight"), get("bias")), layer.activation)
        if kind == "deepsets":
            return deepsets_layer(x, get("weight"), get("bias"), layer.activation)
        if kind == "sab":
            width = x.shape[-1]
            params = SabParams(
                mhsa=self._mhsa(p, index, kind, width, layer.heads, 0.0),
                norm1_gain=get("norm1_gain"),
                norm1_shift=get("norm1_shift"),
                rff_weight=get("rff_weight"),
                rff_bias=get("rff_bias"),
                norm2_gain=get("norm2_gain"),
                norm2_shift=get("norm2_shift"),
                activation=layer.activation,
            )
            return sab(x, params)
        if kind == "late_fusion":
            params = LateFusionParams(
                get("gamma"), get("beta"), get("norm_gain"), get("norm_shift"), layer.activation
            )
            return late_fusion(x, params)
        if kind == "softmax":
            return softmax(x)
        if kind == "sigmoid":
            return sigmoid(x)
        raise ShapeError(f"cannot apply layer kind {kind!r}")

    def _as_input(self, images):
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images, dtype=self.dtype))
        if images.ndim < 4 or images.shape[-4] < 1:
            raise ShapeError(f"expected a set of images (..., N, H, W, C), got {images.shape}")
        if images.shape[-1] != self.spec.input_shape[-1]:
            raise ShapeError(
                f"input channels {images.shape[-1]} do not match model input {self.spec.input_shape}"
            )
        return images

    def forward_layers(self, images, training=False, rng=None, params=None, taps=None):
        """Run the layer stack; ``taps`` (a dict) receives every layer output by index."""
        x = self._as_input(images)
        p = self.parameters if params is None else params
        for index, layer in enumerate(self.spec.layers):
            x = self._apply(index, layer, x, p, training, rng)
            if taps is not None:
                taps[index] = x
        return x

    def forward(self, images, training=False, rng=None, params=None, taps=None):
        """Head output: cic (..., N, K); sc (..., K); anomaly (..., N)."""
        out = self.forward_layers(images, training, rng, params, taps)
        if self.head_mode == "sc_score_fusion":
            return score_fusion(out)
        if self.head_mode == "anomaly":
            return ops.reshape(out, out.shape[:-1])
        return out

    def predict(self, images):
        return self.forward(images).numpy()
