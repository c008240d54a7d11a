"""Grad-CAM over convolutional set blocks, one heatmap per set member."""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from PIL import Image

from ..data.attributes import attribute_box
from ..errors import DataError, SpecError
from ..tensor_core import ops
from ..tensor_core.tensor import Tape, Tensor, backward

logger = logging.getLogger("cst.explain")

LAYER_SELECTORS = ("penultimate_setconv", "last_setconv", "last_conv")


@dataclass(frozen=True)
class CamRequest:
    model: object
    images: np.ndarray  # N x H x W x C, one set
    target: Optional[int] = None
    layer_selector: Union[str, int] = "penultimate_setconv"


@dataclass
class Heatmap:
    values: np.ndarray  # H x W in [0, 1]
    source_index: int
    degenerate: bool = False
    channel_weights: Optional[np.ndarray] = None


def resolve_layer(model, selector):
    """Layer index addressed by a selector name or an explicit index."""
    setconvs = model.layer_indices("setconv2d")
    if selector == "penultimate_setconv":
        if len(setconvs) < 2:
            raise SpecError("penultimate selector needs at least two SetConv2D blocks")
        return setconvs[-2]
    if selector == "last_setconv":
        if not setconvs:
            raise SpecError("model has no SetConv2D block")
        return setconvs[-1]
    if selector == "last_conv":
        convs = model.layer_indices("conv2d", "setconv2d")
        if not convs:
            raise SpecError("model has no convolutional layer")
        return convs[-1]
    try:
        index = int(selector)
    except (TypeError, ValueError):
        raise SpecError(f"unknown layer selector {selector!r}") from None
    if index < 0 or index >= len(model.spec.layers) or model.spec.layers[index].kind not in ("conv2d", "setconv2d"):
        raise SpecError(f"layer {index} is not a convolutional block", index)
    return index


def _pick(logits, position):
    mask = np.zeros(logits.shape, dtype=logits.dtype)
    mask[position] = 1.0
    return ops.sum(ops.mul(logits, Tensor(mask)))


def _target_roots(model, logits, target, count):
    """Scalar scores to differentiate, and which heatmaps each one serves.

    Roots are pre-activation scores. For ``sc_score_fusion`` the root is the mean of
    the per-image target-class logits, not the fused probability.
    """
    head = model.head_mode
    if head == "anomaly":
        if target is None:
            return [(_pick(logits, (i, 0)), [i]) for i in range(count)]
        if not 0 <= target < count:
            raise DataError(f"image index {target} outside a set of {count}")
        return [(_pick(logits, (target, 0)), list(range(count)))]

    num_classes = logits.shape[-1]
    if target is None or not 0 <= target < num_classes:
        raise DataError(f"class index {target} outside {num_classes} classes")
    if head == "cic":
        return [(_pick(logits, (i, target)), [i]) for i in range(count)]
    if head == "sc_late_fusion":
        return [(_pick(logits, (target,)), list(range(count)))]
    mask = np.zeros(logits.shape, dtype=logits.dtype)
    mask[:, target] = 1.0 / count
    return [(ops.sum(ops.mul(logits, Tensor(mask))), list(range(count)))]


def upscale(cam, height, width):
    image = Image.fromarray(np.ascontiguousarray(cam, dtype=np.float32))
    return np.asarray(image.resize((width, height), resample=Image.Resampling.BILINEAR), dtype=np.float64)


def normalize(cam):
    peak = cam.max() if cam.size else 0.0
    if peak <= 0:
        return np.zeros_like(cam), True
    return np.clip(cam / peak, 0.0, 1.0), False


def grad_cam(req):
    """Return N heatmaps for the images of ``req`` at the selected block."""
    model = req.model
    layer = resolve_layer(model, req.layer_selector)
    images = np.asarray(req.images, dtype=model.dtype)
    if images.ndim != 4:
        raise DataError(f"grad_cam expects one set (N, H, W, C), got {images.shape}")
    count, height, width = images.shape[:3]

    with Tape() as tape:
        taps = {}
        model.forward_layers(tape.watch(Tensor(images)), taps=taps)
    logits = taps[len(model.spec.layers) - 2]
    activation = taps[layer]

    target = req.target
    if target is None and model.head_mode != "anomaly":
        probs = np.asarray(model.predict(images))
        target = int(probs.reshape(-1, probs.shape[-1]).mean(axis=0).argmax())

    roots = _target_roots(model, logits, target, count)
    gradients = np.zeros(activation.shape, dtype=np.float64)
    for number, (root, members) in enumerate(roots):
        backward(tape, root, retain=number < len(roots) - 1)
        grad = tape.gradient(activation).data
        for i in members:
            gradients[i] = grad[i]

    heatmaps = []
    feature_maps = activation.data.astype(np.float64)
    for i in range(count):
        weights = gradients[i].mean(axis=(0, 1))
        cam = np.maximum((feature_maps[i] * weights).sum(axis=-1), 0.0)
        values, degenerate = normalize(upscale(cam, height, width))
        if degenerate:
            logger.warning(f"Grad-CAM for image {i} has no positive evidence; returning an all-zero map")
        heatmaps.append(Heatmap(values, i, degenerate, weights))
    return heatmaps


def patch_mask(chosen_attrs, shape):
    mask = np.zeros(shape, dtype=bool)
    for attribute in chosen_attrs:
        r0, r1, c0, c1 = attribute_box(attribute, shape[0])
        mask[r0:r1, c0:c1] = True
    return mask


def localization_score(heatmaps, episodes):
    """Mean share of heatmap mass inside the two chosen attribute patches, over flagged images."""
    scores = []
    for maps, episode in zip(heatmaps, episodes):
        for heatmap in maps:
            if not episode.flags[heatmap.source_index]:
                continue
            mask = patch_mask(episode.chosen_attrs, heatmap.values.shape)
            total = heatmap.values.sum()
            scores.append(float(heatmap.values[mask].sum() / total) if total > 0 else 0.0)
    if not scores:
        raise DataError("localization score is undefined without flagged images")
    return float(np.mean(scores))
