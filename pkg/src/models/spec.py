"""Declarative model specifications and the named architecture presets."""

from dataclasses import asdict, dataclass, replace
from typing import Optional

from ..errors import SpecError
from ..tensor_core.nn import ACTIVATIONS, PADDINGS, conv_output_size

SPATIAL_KINDS = ("setconv2d", "conv2d", "maxpool")
SET_VECTOR_KINDS = ("sab", "deepsets")
VECTOR_KINDS = ("sab", "deepsets", "dense", "late_fusion", "softmax", "sigmoid")
LAYER_KINDS = SPATIAL_KINDS + ("gap",) + VECTOR_KINDS
HEAD_MODES = ("cic", "sc_score_fusion", "sc_late_fusion", "anomaly")
TASK_HEADS = {
    "cic": "cic",
    "sc_sf": "sc_score_fusion",
    "sc_lf": "sc_late_fusion",
    "anomaly": "anomaly",
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: Optional[int] = None
    kernel: int = 3
    stride: int = 1
    dilation: int = 1
    padding: str = "same"
    pool: int = 2
    heads: Optional[int] = None
    out_width: Optional[int] = None
    activation: str = "relu"

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple
    layers: tuple
    head_mode: str = "cic"

    def to_dict(self):
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "head_mode": self.head_mode,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise SpecError("model specification must be a mapping")
        missing = [key for key in ("name", "input_shape", "layers") if key not in data]
        if missing:
            raise SpecError(f"model specification lacks {', '.join(missing)}")
        known = set(LayerSpec.__dataclass_fields__)
        layers = []
        for index, layer in enumerate(data["layers"]):
            if not isinstance(layer, dict):
                raise SpecError("layer entry must be a mapping", index)
            if layer.get("kind") not in LAYER_KINDS:
                raise SpecError(f"unknown layer kind {layer.get('kind')!r}", index)
            unknown = sorted(set(layer) - known)
            if unknown:
                raise SpecError(f"unknown layer fields {', '.join(map(str, unknown))}", index)
            layers.append(LayerSpec(**layer))
        try:
            input_shape = tuple(int(v) for v in data["input_shape"])
        except (TypeError, ValueError) as exc:
            raise SpecError(f"bad input_shape {data['input_shape']!r}") from exc
        if len(input_shape) != 3:
            raise SpecError(f"input_shape needs three entries, got {len(input_shape)}")
        return cls(
            name=data["name"],
            input_shape=input_shape,
            layers=tuple(layers),
            head_mode=data.get("head_mode", "cic"),
        )


def validate(spec):
    """Check composition rules; raises ``SpecError`` naming the offending index."""
    if spec.head_mode not in HEAD_MODES:
        raise SpecError(f"unknown head mode {spec.head_mode!r}")
    if not spec.layers:
        raise SpecError("a model needs at least one layer")

    seen_gap = False
    fused = False
    fusion_count = 0
    for index, layer in enumerate(spec.layers):
        if layer.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {layer.kind!r}", index)
        if layer.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {layer.activation!r}", index)
        if layer.kind in SPATIAL_KINDS and seen_gap:
            raise SpecError(f"{layer.kind} must precede gap", index)
        if layer.kind in VECTOR_KINDS and not seen_gap:
            raise SpecError(f"{layer.kind} must follow gap", index)
        if layer.kind in ("setconv2d", "conv2d"):
            if not layer.filters or layer.filters < 1:
                raise SpecError("convolution needs filters >= 1", index)
            if layer.padding not in PADDINGS or layer.stride < 1 or layer.dilation < 1:
                raise SpecError("invalid convolution geometry", index)
        if layer.kind == "maxpool" and layer.pool < 1:
            raise SpecError("pool size must be >= 1", index)
        if layer.kind in ("sab", "deepsets", "dense", "late_fusion"):
            if not layer.out_width or layer.out_width < 1:
                raise SpecError(f"{layer.kind} needs out_width >= 1", index)
        if layer.kind == "gap":
            if seen_gap:
                raise SpecError("gap may appear only once", index)
            seen_gap = True
        if layer.kind in SET_VECTOR_KINDS and fused:
            raise SpecError(f"{layer.kind} after the set was fused", index)
        if layer.kind == "late_fusion":
            fused = True
            fusion_count += 1

    if not seen_gap:
        raise SpecError("a model needs a gap layer")
    last = spec.layers[-1].kind
    if spec.head_mode == "anomaly":
        if last != "sigmoid":
            raise SpecError("anomaly heads end in sigmoid", len(spec.layers) - 1)
    elif last != "softmax":
        raise SpecError(f"{spec.head_mode} heads end in softmax", len(spec.layers) - 1)
    if spec.head_mode == "sc_late_fusion" and fusion_count != 1:
        raise SpecError("sc_late_fusion needs exactly one late_fusion stage")
    if spec.head_mode != "sc_late_fusion" and fusion_count:
        raise SpecError(f"{spec.head_mode} heads contain no late_fusion stage")
    infer_shapes(spec)
    return spec


def infer_shapes(spec):
    """Output shape of every layer for a single set member (set axis omitted)."""
    h, w, c = spec.input_shape
    shapes = []
    for index, layer in enumerate(spec.layers):
        if layer.kind in ("setconv2d", "conv2d"):
            try:
                h = conv_output_size(h, layer.kernel, layer.stride, layer.dilation, layer.padding)[0]
                w = conv_output_size(w, layer.kernel, layer.stride, layer.dilation, layer.padding)[0]
            except Exception as exc:
                raise SpecError(str(exc), index) from exc
            c = layer.filters
            shapes.append((h, w, c))
        elif layer.kind == "maxpool":
            h, w = h // layer.pool, w // layer.pool
            if h < 1 or w < 1:
                raise SpecError("maxpool empties the spatial extent", index)
            shapes.append((h, w, c))
        elif layer.kind == "gap":
            shapes.append((c,))
        elif layer.kind in ("sab",):
            if layer.out_width != c:
                raise SpecError(f"sab width {layer.out_width} must equal its input width {c}", index)
            shapes.append((c,))
        elif layer.kind in ("deepsets", "dense", "late_fusion"):
            c = layer.out_width
            shapes.append((c,))
        else:
            shapes.append((c,))
    return shapes


def equivalent_cnn(spec):
    """Replace every SetConv2D block with a plain convolution of the same geometry."""
    layers = tuple(
        replace(layer, kind="conv2d") if layer.kind == "setconv2d" else layer for layer in spec.layers
    )
    return replace(spec, name=f"{spec.name}-equivalent-cnn", layers=layers)


# ---------------------------------------------------------------------------
# Presets

def _conv(kind, filters, activation="relu"):
    return LayerSpec(kind=kind, filters=filters, kernel=3, padding="same", activation=activation)


def _pool():
    return LayerSpec(kind="maxpool", pool=2)


def _shrink(filters, divisor):
    return max(1, filters // divisor)


def _cifar_trunk(kind, divisor):
    layers = []
    for filters in (32, 64, 128):
        layers += [_conv(kind, _shrink(filters, divisor)), _conv(kind, _shrink(filters, divisor)), _pool()]
    return layers


def _classifier(num_classes):
    return [LayerSpec(kind="dense", out_width=num_classes, activation="identity"), LayerSpec(kind="softmax")]


def _cifar(kind, set_layers, num_classes, divisor, bottleneck=False):
    width = _shrink(128, divisor)
    layers = _cifar_trunk(kind, divisor) + [LayerSpec(kind="gap")]
    for set_kind in set_layers:
        layers.append(LayerSpec(kind=set_kind, out_width=width))
    if bottleneck:
        layers.append(LayerSpec(kind="dense", out_width=2, activation="identity"))
    return layers + _classifier(num_classes)


def _anomaly(set_kind, set_count, divisor, desk):
    layers = [
        _conv("conv2d", _shrink(64, divisor)),
        _conv("conv2d", _shrink(64, divisor)),
        _pool(),
        _conv("conv2d", _shrink(128, divisor)),
        _conv("conv2d", _shrink(128, divisor)),
        _pool(),
    ]
    kind = "setconv2d" if set_kind is None else "conv2d"
    stages = ((256, 2), (512, 2)) if desk else ((256, 2), (512, 4), (512, 4))
    for number, (filters, repeat) in enumerate(stages):
        layers += [_conv(kind, _shrink(filters, divisor)) for _ in range(repeat)]
        if not desk or number < len(stages) - 1:
            layers.append(_pool())
    layers.append(LayerSpec(kind="gap"))
    width = _shrink(512, divisor)
    layers += [LayerSpec(kind=set_kind, out_width=width) for _ in range(set_count)] if set_kind else []
    return layers + [
        LayerSpec(kind="dense", out_width=1, activation="identity"),
        LayerSpec(kind="sigmoid"),
    ]


def _cst15(num_classes, divisor):
    layers = []
    for filters in (64, 128):
        layers += [_conv("conv2d", _shrink(filters, divisor), "relu6") for _ in range(2)] + [_pool()]
    for filters, repeat in ((256, 2), (512, 4), (512, 4)):
        layers += [_conv("setconv2d", _shrink(filters, divisor), "relu6") for _ in range(repeat)]
        layers.append(_pool())
    return layers + [LayerSpec(kind="gap")] + _classifier(num_classes)


PRESETS = {
    "cifar-cst": lambda k, d: _cifar("setconv2d", (), k, d),
    "cifar-cnn": lambda k, d: _cifar("conv2d", (), k, d),
    "cifar-cst-bottleneck": lambda k, d: _cifar("setconv2d", (), k, d, bottleneck=True),
    "st-s": lambda k, d: _cifar("conv2d", ("sab",) * 2, k, d),
    "st-l": lambda k, d: _cifar("conv2d", ("sab",) * 3, k, d),
    "ds": lambda k, d: _cifar("conv2d", ("deepsets",) * 3, k, d),
    "anomaly-cst": lambda k, d: _anomaly(None, 0, d, desk=False),
    "anomaly-st-s": lambda k, d: _anomaly("sab", 8, d, desk=False),
    "anomaly-st-l": lambda k, d: _anomaly("sab", 9, d, desk=False),
    "anomaly-ds": lambda k, d: _anomaly("deepsets", 1, d, desk=False),
    "anomaly-cst-desk": lambda k, d: _anomaly(None, 0, d, desk=True),
    "anomaly-st-s-desk": lambda k, d: _anomaly("sab", 2, d, desk=True),
    "anomaly-st-l-desk": lambda k, d: _anomaly("sab", 3, d, desk=True),
    "anomaly-ds-desk": lambda k, d: _anomaly("deepsets", 1, d, desk=True),
    "cst15": lambda k, d: _cst15(k, d),
}

DEFAULT_INPUT_SHAPES = {
    "cst15": (224, 224, 3),
    "anomaly-cst": (178, 218, 3),
    "anomaly-st-s": (178, 218, 3),
    "anomaly-st-l": (178, 218, 3),
    "anomaly-ds": (178, 218, 3),
}


def preset_spec(name, task="cic", num_classes=10, divisor=1, input_shape=None):
    """Build the ``ModelSpec`` of a named preset for a task."""
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    if task not in TASK_HEADS:
        raise SpecError(f"unknown task {task!r}")
    is_anomaly_preset = name.startswith("anomaly-")
    if is_anomaly_preset != (task == "anomaly"):
        raise SpecError(f"preset {name!r} does not serve task {task!r}")

    layers = PRESETS[name](num_classes, divisor)
    if task == "sc_lf":
        # fusion sits right before the classifier dense
        width = next(l.out_width or l.filters for l in reversed(layers[:-2]) if l.out_width or l.filters)
        layers = layers[:-2] + [LayerSpec(kind="late_fusion", out_width=width)] + layers[-2:]
    if input_shape is None:
        input_shape = DEFAULT_INPUT_SHAPES.get(name, (32, 32, 3))
    suffix = "" if divisor == 1 else f"/{divisor}"
    spec = ModelSpec(
        name=f"{name}{suffix}",
        input_shape=tuple(input_shape),
        layers=tuple(layers),
        head_mode=TASK_HEADS[task],
    )
    return validate(spec)
