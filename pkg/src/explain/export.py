"""Plain-text image exports: graymap heatmaps (P2) and overlay pixmaps (P3)."""

from pathlib import Path

import numpy as np
from PIL import Image

MAXVAL = 255
OVERLAY_ALPHA = 0.5


def _to_bytes(values):
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * MAXVAL), 0, MAXVAL).astype(np.uint8)


def _write_plain(path, magic, pixels, channels):
    height, width = pixels.shape[:2]
    rows = pixels.reshape(height, width * channels)
    lines = [magic, f"{width} {height}", str(MAXVAL)]
    lines += [" ".join(str(int(v)) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_pgm(path, heatmap):
    """Heatmap values in [0, 1] as an ASCII portable graymap."""
    return _write_plain(path, "P2", _to_bytes(heatmap), 1)


def overlay(image, heatmap, alpha=OVERLAY_ALPHA):
    """Blend a red-to-blue heat colouring over the grey input image."""
    gray = _to_bytes(np.asarray(image)[..., 0] if np.asarray(image).ndim == 3 else image)
    base = Image.fromarray(gray).convert("RGB")
    heat = np.asarray(heatmap, dtype=np.float64)
    colours = np.stack([heat, np.zeros_like(heat), 1.0 - heat], axis=-1)
    tint = Image.fromarray(_to_bytes(colours))
    return np.asarray(Image.blend(base, tint, alpha))


def write_overlay_ppm(path, image, heatmap, alpha=OVERLAY_ALPHA):
    """Overlay-composited ASCII portable pixmap."""
    return _write_plain(path, "P3", overlay(image, heatmap, alpha), 3)
