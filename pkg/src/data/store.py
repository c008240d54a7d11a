"""Corpus directories: ``manifest.yaml`` plus a raw ``images.f32`` block."""

import hashlib
from pathlib import Path

import numpy as np
import yaml

from ..errors import DataError
from .attributes import AttributeCorpus
from .classification import ClassificationCorpus, SynthClassSpec

MANIFEST = "manifest.yaml"
IMAGE_BLOCK = "images.f32"


def manifest_for(corpus, block_sha256):
    manifest = {
        "kind": corpus.kind,
        "params": corpus.params,
        "image_shape": list(corpus.images.shape),
        "image_block": IMAGE_BLOCK,
        "image_sha256": block_sha256,
        "splits": {name: idx.tolist() for name, idx in corpus.splits.items()},
    }
    if corpus.kind == "classification":
        manifest["class_specs"] = [spec.to_dict() for spec in corpus.class_specs]
        manifest["labels"] = corpus.labels.tolist()
        manifest["cue_present"] = [int(c) for c in corpus.cue_present]
    else:
        manifest["attributes"] = corpus.attributes.tolist()
    return manifest


def write_corpus(corpus, directory):
    """Write into an existing directory; returns the manifest."""
    directory = Path(directory)
    block = np.ascontiguousarray(corpus.images, dtype="<f4").tobytes()
    manifest = manifest_for(corpus, hashlib.sha256(block).hexdigest())
    (directory / IMAGE_BLOCK).write_bytes(block)
    with open(directory / MANIFEST, "w") as handle:
        yaml.safe_dump(manifest, handle, sort_keys=False)
    return manifest


def load_corpus(directory):
    directory = Path(directory)
    manifest_path = directory / MANIFEST
    if not manifest_path.exists():
        raise DataError(f"no corpus manifest in {directory}")
    with open(manifest_path) as handle:
        manifest = yaml.safe_load(handle)

    block = (directory / manifest["image_block"]).read_bytes()
    if hashlib.sha256(block).hexdigest() != manifest["image_sha256"]:
        raise DataError(f"image block checksum mismatch in {directory}")
    shape = tuple(manifest["image_shape"])
    images = np.frombuffer(block, dtype="<f4").astype(np.float32).reshape(shape)
    splits = {name: np.asarray(idx, dtype=np.int64) for name, idx in manifest["splits"].items()}

    if manifest["kind"] == "classification":
        return ClassificationCorpus(
            images,
            np.asarray(manifest["labels"], dtype=np.int64),
            np.asarray(manifest["cue_present"], dtype=bool),
            [SynthClassSpec(**spec) for spec in manifest["class_specs"]],
            manifest["params"],
            splits,
        )
    if manifest["kind"] == "attributes":
        return AttributeCorpus(
            images, np.asarray(manifest["attributes"], dtype=np.uint8), manifest["params"], splits
        )
    raise DataError(f"unknown corpus kind {manifest['kind']!r}")
