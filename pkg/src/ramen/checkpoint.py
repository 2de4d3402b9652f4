"""Binary container for checkpoints and feature maps.

Layout: magic, format version, header length, a JSON header holding free-form
metadata plus a manifest of (name, shape, offset) entries, then little-endian
float32 payloads in manifest order. Loading a checkpoint validates every
parameter name and shape against the live model and refuses on any mismatch,
naming the differences.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RMNBIN1\x00"
FORMAT_VERSION = 1


class CheckpointMismatchError(ValueError):
    """Stored manifest does not match the constructed model."""


def write_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "entries": entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a recognized container (bad magic)")
    version, header_len = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    start = len(MAGIC) + struct.calcsize("<IQ")
    header = json.loads(raw[start : start + header_len].decode("utf-8"))
    payload = raw[start + header_len :]
    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return arrays, header.get("meta", {})


def save_checkpoint(path, model, meta: dict | None = None):
    arrays = {name: p.data for name, p in model.named_parameters()}
    full_meta = {"kind": "checkpoint"}
    if meta:
        full_meta.update(meta)
    write_arrays(path, arrays, full_meta)


def load_checkpoint(path, model) -> dict:
    arrays, meta = read_arrays(path)
    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(arrays))
    unexpected = sorted(set(arrays) - set(params))
    shape_diffs = sorted(
        f"{name}: stored {arrays[name].shape} vs model {params[name].shape}"
        for name in set(params) & set(arrays)
        if tuple(arrays[name].shape) != tuple(params[name].shape)
    )
    if missing or unexpected or shape_diffs:
        lines = []
        if missing:
            lines.append("missing from file: " + ", ".join(missing))
        if unexpected:
            lines.append("not in model: " + ", ".join(unexpected))
        if shape_diffs:
            lines.append("shape mismatches: " + "; ".join(shape_diffs))
        raise CheckpointMismatchError(f"{path}: manifest does not match model\n" + "\n".join(lines))
    for name, param in params.items():
        param.data = arrays[name].astype(param.dtype)
    return meta
