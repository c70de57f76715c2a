"""Binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic  b"GHOICKPT"
    4 bytes   uint32 format version (1)
    8 bytes   uint64 header length N
    N bytes   UTF-8 JSON header, keys sorted:
                arch        architecture keys the shapes depend on
                config_hash sha256 of the run config text
                tensors     [[name, shape], ...] in storage order
                meta        free-form (step, epoch, ...)
    ...       raw float64 little-endian data of each tensor, C order, concatenated

Tensors are parameters followed by non-trainable buffers (prefixed ``buffer:``).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

MAGIC = b"GHOICKPT"
VERSION = 1
BUFFER_PREFIX = "buffer:"


def save_checkpoint(path, store, arch: dict, config_hash: str = "", meta: dict | None = None) -> None:
    tensors = [(k, t.data) for k, t in store.params.items()]
    tensors += [(BUFFER_PREFIX + k, v) for k, v in store.buffers.items()]
    header = {
        "arch": arch,
        "config_hash": config_hash,
        "meta": meta or {},
        "tensors": [[k, list(a.shape)] for k, a in tensors],
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(raw)))
        fh.write(raw)
        for _, a in tensors:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(header, tensors)`` without touching any model."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint {path} not found")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<IQ", blob, 8)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    offset = 8 + struct.calcsize("<IQ")
    header = json.loads(blob[offset: offset + n].decode("utf-8"))
    offset += n
    tensors = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise DataError(f"{path}: truncated data for {name}")
        tensors[name] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes")
    return header, tensors


def load_checkpoint(path, store, arch: dict | None = None) -> dict:
    """Load tensors into ``store``; refuses when ``arch`` differs from the recorded one. Returns the header."""
    header, tensors = read_checkpoint(path)
    if arch is not None and header["arch"] != json.loads(json.dumps(arch)):
        diff = sorted(k for k in set(arch) | set(header["arch"]) if arch.get(k) != header["arch"].get(k))
        raise ConfigError(f"checkpoint architecture mismatch on {diff}")
    params = {k: v for k, v in tensors.items() if not k.startswith(BUFFER_PREFIX)}
    store.load_state_dict(params)
    for k, v in tensors.items():
        if k.startswith(BUFFER_PREFIX):
            store.buffers[k[len(BUFFER_PREFIX):]] = v.copy()
    return header
