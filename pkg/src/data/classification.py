"""Procedural glyph corpus for contextualized and set-level classification.

Classes are grouped into ambiguity groups that share one glyph motif. Inside
a group, classes differ only by a small corner cue, and each image shows its
cue with probability ``1 - p_ambiguous``. A single image without its cue is
indistinguishable from the rest of its group, so single-image accuracy is
capped while a set of same-class images usually reveals the cue.
"""

from dataclasses import dataclass, field, asdict

import numpy as np
from PIL import Image, ImageDraw

from ..errors import DataError

MOTIFS = ("disc", "square", "triangle", "cross", "ring", "diamond", "bar", "chevron")
MIN_IMAGE_SIZE = 16
SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class SynthClassSpec:
    class_id: int
    shape_kind: str
    thickness: int
    ambiguity_group: int
    cue_slot: int

    def to_dict(self):
        return asdict(self)


@dataclass
class ClassificationCorpus:
    images: np.ndarray  # n x H x W x 1, float32 in [0, 1]
    labels: np.ndarray  # n, int64
    cue_present: np.ndarray  # n, bool
    class_specs: list
    params: dict
    splits: dict = field(default_factory=dict)

    kind = "classification"

    @property
    def num_classes(self):
        return len(self.class_specs)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return ClassificationCorpus(
            self.images[indices],
            self.labels[indices],
            self.cue_present[indices],
            self.class_specs,
            self.params,
        )

    def split(self, name):
        if name not in self.splits:
            raise DataError(f"corpus has no split {name!r}")
        return self.subset(self.splits[name])


def class_specs(num_classes, group_size, p_ambiguous):
    """Assign motifs and cue slots; a trailing singleton group joins its neighbour."""
    if group_size < 1 or group_size > 4:
        raise DataError(f"group size must be in 1..4 (one cue per corner), got {group_size}")
    groups = [list(range(s, min(s + group_size, num_classes))) for s in range(0, num_classes, group_size)]
    if p_ambiguous > 0 and len(groups) > 1 and len(groups[-1]) == 1 and len(groups[-2]) < 4:
        groups[-2] += groups.pop()
    if p_ambiguous > 0 and any(len(g) < 2 for g in groups):
        raise DataError("ambiguous classes need at least two classes per ambiguity group")
    specs = []
    for group_id, members in enumerate(groups):
        motif = MOTIFS[group_id % len(MOTIFS)]
        thickness = 1 + (group_id // len(MOTIFS)) % 2
        for slot, class_id in enumerate(members):
            specs.append(SynthClassSpec(class_id, motif, thickness, group_id, slot))
    return specs


def _draw_motif(draw, kind, box, thickness, ink):
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    if kind == "disc":
        draw.ellipse(box, fill=ink)
    elif kind == "square":
        draw.rectangle(box, outline=ink, width=thickness + 1)
    elif kind == "triangle":
        draw.polygon([(cx, y0), (x1, y1), (x0, y1)], outline=ink, width=thickness + 1)
    elif kind == "cross":
        draw.line([(cx, y0), (cx, y1)], fill=ink, width=thickness + 1)
        draw.line([(x0, cy), (x1, cy)], fill=ink, width=thickness + 1)
    elif kind == "ring":
        draw.ellipse(box, outline=ink, width=thickness + 1)
    elif kind == "diamond":
        draw.polygon([(cx, y0), (x1, cy), (cx, y1), (x0, cy)], fill=ink)
    elif kind == "bar":
        draw.rectangle((x0, cy - thickness, x1, cy + thickness), fill=ink)
    else:
        draw.line([(x0, y0), (cx, y1), (x1, y0)], fill=ink, width=thickness + 1)


def cue_box(slot, image_size):
    """Corner cell (row0, row1, col0, col1) holding the cue of ``slot``."""
    edge = image_size - 3
    rows = (1, 1, edge, edge)[slot]
    cols = (1, edge, 1, edge)[slot]
    return rows, rows + 2, cols, cols + 2


def render_glyph(spec, image_size, rng, with_cue, noise=0.05):
    canvas = Image.new("L", (image_size, image_size), 0)
    draw = ImageDraw.Draw(canvas)
    quarter = image_size // 4
    jx, jy = rng.integers(-1, 2, size=2)
    box = (quarter + jx, quarter + jy, 3 * quarter + jx - 1, 3 * quarter + jy - 1)
    _draw_motif(draw, spec.shape_kind, box, spec.thickness, ink=200)
    pixels = np.asarray(canvas, dtype=np.float32) / 255.0
    if with_cue:
        r0, r1, c0, c1 = cue_box(spec.cue_slot, image_size)
        pixels[r0:r1, c0:c1] = 1.0
    pixels = pixels + rng.normal(0.0, noise, size=pixels.shape).astype(np.float32)
    return np.clip(pixels, 0.0, 1.0)[..., None]


def stratified_splits(labels, fractions, rng):
    """Per-class shuffled split into train / validation / test index arrays."""
    parts = {name: [] for name in SPLITS}
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        n_train = int(round(fractions[0] * len(members)))
        n_val = int(round(fractions[1] * len(members)))
        parts["train"].append(members[:n_train])
        parts["validation"].append(members[n_train : n_train + n_val])
        parts["test"].append(members[n_train + n_val :])
    return {name: np.sort(np.concatenate(chunks)).astype(np.int64) for name, chunks in parts.items()}


def gen_classification(
    num_classes,
    per_class,
    image_size=16,
    p_ambiguous=0.5,
    seed=0,
    group_size=2,
    n_max=5,
    split_fractions=(0.7, 0.15, 0.15),
):
    """Generate a labelled glyph corpus; bit-identical for identical arguments."""
    if image_size < MIN_IMAGE_SIZE:
        raise DataError(f"image_size must be >= {MIN_IMAGE_SIZE}, got {image_size}")
    if per_class < n_max:
        raise DataError(f"per_class={per_class} is smaller than the largest set size {n_max}")
    if not 0.0 <= p_ambiguous <= 1.0:
        raise DataError(f"p_ambiguous must lie in [0, 1], got {p_ambiguous}")

    rng = np.random.default_rng(seed)
    specs = class_specs(num_classes, group_size, p_ambiguous)
    images, labels, cues = [], [], []
    for spec in specs:
        for _ in range(per_class):
            with_cue = bool(rng.random() >= p_ambiguous)
            images.append(render_glyph(spec, image_size, rng, with_cue))
            labels.append(spec.class_id)
            cues.append(with_cue)
    labels = np.asarray(labels, dtype=np.int64)
    params = {
        "num_classes": num_classes,
        "per_class": per_class,
        "image_size": image_size,
        "p_ambiguous": float(p_ambiguous),
        "group_size": group_size,
        "seed": seed,
        "split_fractions": [float(f) for f in split_fractions],
    }
    corpus = ClassificationCorpus(
        np.stack(images).astype(np.float32), labels, np.asarray(cues, dtype=bool), specs, params
    )
    corpus.splits = stratified_splits(labels, split_fractions, np.random.default_rng([seed, 1]))
    return corpus


def bayes_accuracy(corpus):
    """Best achievable single-image accuracy given which images show their cue."""
    group_sizes = {}
    for spec in corpus.class_specs:
        group_sizes[spec.ambiguity_group] = group_sizes.get(spec.ambiguity_group, 0) + 1
    per_image = [
        1.0 if cue else 1.0 / group_sizes[corpus.class_specs[label].ambiguity_group]
        for label, cue in zip(corpus.labels, corpus.cue_present)
    ]
    return float(np.mean(per_image))


def same_class_sets(labels, size, rng):
    """Shuffle each class and cut it into disjoint sets of ``size``; leftovers are dropped."""
    sets = []
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        usable = (len(members) // size) * size
        sets.extend(members[:usable].reshape(-1, size))
    return sets
