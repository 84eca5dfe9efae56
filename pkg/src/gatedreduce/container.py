"""Versioned binary container for model tensors.

Layout (all integers little-endian)::

    8 bytes   magic b"GREDMODL"
    u32       format version
    u64       header length N
    N bytes   UTF-8 JSON header: {"meta": {...}, "tensors": [{"module", "name", "shape"}, ...]}
    ...       each tensor's float64 values, row-major, in header order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GREDMODL"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


def write_container(path, tensors, meta):
    """``tensors`` is a list of ``(module, name, array)``; ``meta`` must be JSON-serializable."""
    entries, blobs = [], []
    for module, name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"module": module, "name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def read_container(path):
    """Returns ``(meta, [(module, name, array), ...])``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from exc
    offset = 8 + struct.calcsize("<IQ")
    if data[:8] != MAGIC or len(data) < offset:
        raise ContainerError(f"{path}: not a model container")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version > FORMAT_VERSION:
        raise ContainerError(f"{path}: container version {version} is newer than supported {FORMAT_VERSION}")
    if offset + hlen > len(data):
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(data[offset : offset + hlen])
    except ValueError as exc:
        raise ContainerError(f"{path}: corrupt header: {exc}") from exc
    offset += hlen
    tensors = []
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise ContainerError(f"{path}: truncated tensor {e['module']}.{e['name']}")
        arr = np.frombuffer(data[offset:end], dtype="<f8").reshape(e["shape"]).astype(np.float64)
        tensors.append((e["module"], e["name"], arr))
        offset = end
    if offset != len(data):
        raise ContainerError(f"{path}: {len(data) - offset} trailing bytes")
    return header["meta"], tensors
