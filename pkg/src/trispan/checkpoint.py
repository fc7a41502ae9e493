"""Binary parameter container.

Layout: magic bytes "AVTS", format version as little-endian u16, a u32
byte length followed by a JSON manifest listing (name, dtype, shape) per
array, then the raw little-endian payloads in manifest order. FORMAT.md
carries a hex-level example.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"AVTS"
VERSION = 1

_DTYPE_TAGS = {"f32": "<f4", "f64": "<f8"}
_TAG_FOR = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def save_arrays(path, arrays: dict):
    """Write named float arrays; iteration order becomes payload order."""
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = _TAG_FOR.get(arr.dtype)
        if tag is None:
            raise CheckpointError(f"array {name!r} has unsupported dtype {arr.dtype}")
        entries.append({"name": name, "dtype": tag, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())
    manifest = json.dumps({"arrays": entries}).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(2, "little"))
        fh.write(len(manifest).to_bytes(4, "little"))
        fh.write(manifest)
        for blob in payloads:
            fh.write(blob)
    return path


def load_arrays(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 10 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a parameter container (bad magic)")
    version = int.from_bytes(raw[4:6], "little")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    manifest_len = int.from_bytes(raw[6:10], "little")
    try:
        manifest = json.loads(raw[10 : 10 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest in {path}: {exc}") from exc
    offset = 10 + manifest_len
    arrays = {}
    for entry in manifest["arrays"]:
        dtype = _DTYPE_TAGS.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"unknown dtype tag {entry['dtype']!r} in {path}")
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        blob = raw[offset : offset + nbytes]
        if len(blob) != nbytes:
            raise CheckpointError(f"truncated payload for {entry['name']!r} in {path}")
        arrays[entry["name"]] = np.frombuffer(blob, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes in {path}")
    return arrays


def save_model(path, model):
    return save_arrays(path, {name: t.data for name, t in model.param_dict().items()})


def load_model(path, model):
    """Load parameters into an existing model; strict on names and shapes."""
    arrays = load_arrays(path)
    params = model.param_dict()
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"parameter set mismatch (missing: {missing[:4]}, unexpected: {extra[:4]})"
        )
    for name, tensor in params.items():
        arr = arrays[name]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape} vs model "
                f"{tensor.data.shape}"
            )
        tensor.data = arr.astype(tensor.data.dtype, copy=False)
    return model
