from .checkpoint import load, save
from .model import Model, build, param_name
from .spec import (
    HEAD_MODES,
    LAYER_KINDS,
    PRESETS,
    TASK_HEADS,
    LayerSpec,
    ModelSpec,
    equivalent_cnn,
    infer_shapes,
    preset_spec,
    validate,
)
