from .gradcheck import finite_diff_grad, relative_error
from .nn import (
    ACTIVATIONS,
    LAYER_NORM_EPS,
    ConvParams,
    activate,
    conv2d,
    conv_output_size,
    dense,
    global_avg_pool,
    layer_norm,
    maxpool2d,
    relu,
    relu6,
    sigmoid,
    softmax,
)
from .tensor import Tape, Tensor, as_tensor, backward, debug_checks, default_dtype, float64_mode
