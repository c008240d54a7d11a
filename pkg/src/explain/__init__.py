from .export import overlay, write_overlay_ppm, write_pgm
from .grad_cam import (
    LAYER_SELECTORS,
    CamRequest,
    Heatmap,
    grad_cam,
    localization_score,
    normalize,
    patch_mask,
    resolve_layer,
)
