"""Attribute-tagged image corpus and Set Anomaly Detection episodes."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .classification import stratified_splits

logger = logging.getLogger("cst.data")

NUM_ATTRIBUTES = 8
MAX_PREVALENCE = 0.4


@dataclass(frozen=True)
class AttrImage:
    pixels: np.ndarray  # H x W x 1
    attributes: np.ndarray  # A binary flags


@dataclass
class AttributeCorpus:
    images: np.ndarray  # n x H x W x 1
    attributes: np.ndarray  # n x A, uint8
    params: dict
    splits: dict = field(default_factory=dict)

    kind = "attributes"

    def __len__(self):
        return len(self.images)

    def image(self, index):
        return AttrImage(self.images[index], self.attributes[index])

    def split_indices(self, name):
        if name not in self.splits:
            raise DataError(f"corpus has no split {name!r}")
        return self.splits[name]


def attribute_box(attribute, image_size):
    """Patch (row0, row1, col0, col1) of an attribute; patches never overlap."""
    cell = image_size // 4
    row = 2 * (attribute // 4)
    col = attribute % 4
    return row * cell + 1, (row + 1) * cell - 1, col * cell + 1, (col + 1) * cell - 1


def _paint_attribute(pixels, attribute, image_size):
    r0, r1, c0, c1 = attribute_box(attribute, image_size)
    patch = pixels[r0:r1, c0:c1]
    pattern = attribute % 4
    if pattern == 0:
        patch[:] = 0.9
    elif pattern == 1:
        patch[::2, :] = 0.9
    elif pattern == 2:
        patch[:, ::2] = 0.9
    else:
        patch[::2, ::2] = 0.9
        patch[1::2, 1::2] = 0.9


def render_attr_image(bits, image_size, rng, noise=0.05):
    base = 0.15 + 0.1 * rng.random()
    pixels = np.full((image_size, image_size), base, dtype=np.float32)
    for attribute in np.flatnonzero(bits):
        _paint_attribute(pixels, int(attribute), image_size)
    pixels += rng.normal(0.0, noise, size=pixels.shape).astype(np.float32)
    return np.clip(pixels, 0.0, 1.0)[..., None]


def gen_attribute_corpus(count, image_size=24, seed=0, n_attributes=NUM_ATTRIBUTES, split_fractions=(0.7, 0.15, 0.15)):
    """Images whose attribute bits each toggle one disjoint visible patch."""
    if n_attributes > 8:
        raise DataError("at most 8 disjoint attribute patches fit the layout")
    if image_size < 16:
        raise DataError(f"image_size must be >= 16, got {image_size}")
    rng = np.random.default_rng(seed)
    attributes = (rng.random((count, n_attributes)) < 0.5).astype(np.uint8)
    images = np.stack([render_attr_image(bits, image_size, rng) for bits in attributes])
    params = {
        "count": count,
        "image_size": image_size,
        "n_attributes": n_attributes,
        "seed": seed,
        "split_fractions": [float(f) for f in split_fractions],
    }
    corpus = AttributeCorpus(images.astype(np.float32), attributes, params)
    # stratify on the first attribute so each split sees both values
    corpus.splits = stratified_splits(attributes[:, 0], split_fractions, np.random.default_rng([seed, 1]))
    return corpus


@dataclass
class AnomalyEpisode:
    images: np.ndarray  # N x H x W x 1
    flags: np.ndarray  # N, 1 = anomalous
    indices: np.ndarray  # corpus rows
    chosen_attrs: tuple
    p_anomaly: float

    @property
    def size(self):
        return len(self.flags)


def anomaly_count(size, p_anomaly):
    return int(math.floor(size * p_anomaly + 1e-9))


def make_anomaly_episode(corpus, size, p_anomaly, rng, pool=None, max_retries=20):
    """Pick two attributes; floor(N·p) images lack both, the rest show both."""
    if not 0.0 <= p_anomaly <= MAX_PREVALENCE + 1e-12:
        raise DataError(f"p_anomaly must lie in [0, {MAX_PREVALENCE}], got {p_anomaly}")
    pool = np.arange(len(corpus)) if pool is None else np.asarray(pool)
    n_anomalies = anomaly_count(size, p_anomaly)
    table = corpus.attributes[pool]
    n_attributes = table.shape[1]

    for attempt in range(max_retries):
        a, b = sorted(int(x) for x in rng.choice(n_attributes, size=2, replace=False))
        normal_pool = pool[(table[:, a] == 1) & (table[:, b] == 1)]
        anomalous_pool = pool[(table[:, a] == 0) & (table[:, b] == 0)]
        if len(normal_pool) >= size - n_anomalies and len(anomalous_pool) >= n_anomalies:
            break
        logger.warning(f"Attribute pair ({a}, {b}) cannot fill an episode, resampling (attempt {attempt + 1})")
    else:
        raise DataError(f"no feasible attribute pair after {max_retries} attempts")

    normal = rng.choice(normal_pool, size=size - n_anomalies, replace=False)
    anomalous = rng.choice(anomalous_pool, size=n_anomalies, replace=False)
    indices = np.concatenate([normal, anomalous]).astype(np.int64)
    flags = np.concatenate([np.zeros(len(normal)), np.ones(len(anomalous))]).astype(np.int64)
    order = rng.permutation(size)
    indices, flags = indices[order], flags[order]
    return AnomalyEpisode(corpus.images[indices], flags, indices, (a, b), float(p_anomaly))
