"""Binary checkpoint container.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"RVGNCKPT"
    offset 8   uint32    format version (1)
    offset 12  uint32    header length H in bytes
    offset 16  H bytes   UTF-8 JSON header:
                           {"meta": {...},
                            "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    offset 16+H          payload; each tensor is a C-order little-endian array
                         at ``offset`` bytes from the payload start

``dtype`` is ``"<f4"`` (default, exported weights) or ``"<f8"`` (resumable
training state, which must round-trip bit-exactly).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RVGNCKPT"
VERSION = 1
DTYPES = ("<f4", "<f8")


class CheckpointError(ValueError):
    pass


def save(path, tensors: dict, meta: dict | None = None, dtype: str = "<f4") -> None:
    if dtype not in DTYPES:
        raise CheckpointError(f"unsupported dtype {dtype!r}")
    directory, blobs, offset = [], [], 0
    for name in tensors:
        arr = np.ascontiguousarray(np.asarray(tensors[name]), dtype=dtype)
        blob = arr.tobytes()
        directory.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                          "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "tensors": directory}, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load(path) -> tuple[dict, dict]:
    """Returns ``(tensors, meta)``; tensors are float64 arrays."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for ent in header["tensors"]:
        if ent["dtype"] not in DTYPES:
            raise CheckpointError(f"{path}: tensor {ent['name']} has dtype {ent['dtype']}")
        start = base + ent["offset"]
        arr = np.frombuffer(raw[start:start + ent["nbytes"]], dtype=ent["dtype"])
        tensors[ent["name"]] = arr.reshape(ent["shape"]).astype(np.float64)
    return tensors, header["meta"]


def assign(named: dict, values: dict, strict: bool = True) -> None:
    """Copy checkpoint arrays into same-named Tensors."""
    missing = [k for k in named if k not in values]
    if strict and missing:
        raise CheckpointError(f"checkpoint lacks tensors: {missing[:5]}")
    for k, t in named.items():
        if k in values:
            if values[k].shape != t.shape:
                raise CheckpointError(f"{k}: shape {values[k].shape} != expected {t.shape}")
            t.data = values[k].copy()
