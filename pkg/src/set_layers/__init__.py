from .layers import (
    ATTENTION_DROPOUT,
    LateFusionParams,
    MhsaParams,
    SabParams,
    SetConvParams,
    deepsets_layer,
    head_geometry,
    late_fusion,
    mhsa,
    sab,
    score_fusion,
    setconv2d,
    stack_set,
)
