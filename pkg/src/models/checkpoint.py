"""Checkpoint files.

Layout::

    magic (8 bytes) | format version (uint32 LE) | header length (uint32 LE)
    | YAML header (spec, parameter names and shapes, payload sha256)
    | parameter blocks, little-endian float32, in header order
"""

import hashlib
import struct
from pathlib import Path

import numpy as np
import yaml

from ..errors import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    SpecError,
)
from ..tensor_core.tensor import Tensor
from .model import Model
from .spec import ModelSpec, validate

MAGIC = b"CSTCKPT\x00"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<II")


def save(model, path):
    path = Path(path)
    names = list(model.parameters)
    blocks = [np.ascontiguousarray(model.parameters[n].data, dtype="<f4") for n in names]
    payload = b"".join(block.tobytes() for block in blocks)
    header = {
        "spec": model.spec.to_dict(),
        "attention_dropout": float(model.attention_dropout),
        "parameters": [{"name": n, "shape": list(b.shape)} for n, b in zip(names, blocks)],
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = yaml.safe_dump(header, sort_keys=False).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(_PREAMBLE.pack(FORMAT_VERSION, len(header_bytes)))
        handle.write(header_bytes)
        handle.write(payload)
    return path


def _read_exact(handle, count, what):
    data = handle.read(count)
    if len(data) != count:
        raise CheckpointTruncatedError(f"checkpoint truncated while reading {what}")
    return data


def _parse_header(raw, path):
    try:
        header = yaml.safe_load(raw.decode("utf-8"))
    except (UnicodeDecodeError, yaml.YAMLError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable checkpoint header") from exc
    if not isinstance(header, dict):
        raise CheckpointFormatError(f"{path}: checkpoint header is not a mapping")
    missing = [key for key in ("spec", "parameters", "payload_bytes", "sha256") if key not in header]
    if missing:
        raise CheckpointFormatError(f"{path}: checkpoint header lacks {', '.join(missing)}")
    if not isinstance(header["payload_bytes"], int) or header["payload_bytes"] < 0:
        raise CheckpointFormatError(f"{path}: bad payload size {header['payload_bytes']!r}")
    if not isinstance(header["parameters"], list):
        raise CheckpointFormatError(f"{path}: parameter table is not a list")
    return header


def load(path):
    with open(path, "rb") as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic bytes)")
        version, header_length = _PREAMBLE.unpack(_read_exact(handle, _PREAMBLE.size, "preamble"))
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
            )
        header = _parse_header(_read_exact(handle, header_length, "header"), path)
        try:
            spec = validate(ModelSpec.from_dict(header["spec"]))
        except SpecError as exc:
            raise CheckpointVersionError(f"checkpoint format version {version}: {exc}") from exc
        except (TypeError, ValueError, AttributeError) as exc:
            raise CheckpointVersionError(f"checkpoint format version {version}: malformed spec ({exc})") from exc

        payload = _read_exact(handle, header["payload_bytes"], "parameter blocks")

    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointChecksumError(f"{path}: parameter checksum mismatch")

    parameters = {}
    offset = 0
    try:
        for entry in header["parameters"]:
            shape = tuple(int(v) for v in entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            block = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            parameters[str(entry["name"])] = Tensor(block.astype(np.float32).reshape(shape))
            offset += count * 4
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: parameter table does not match the payload ({exc})") from exc
    if offset != len(payload):
        raise CheckpointFormatError(f"{path}: parameter table covers {offset} of {len(payload)} payload bytes")
    return Model(spec, parameters, header.get("attention_dropout", 0.1))
