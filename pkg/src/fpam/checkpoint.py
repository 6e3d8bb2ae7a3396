"""Binary checkpoint format for parameter stores.

Layout: magic ``FPAM``, u32 version, u32 parameter count, then per parameter
a u16 name length, the UTF-8 name, a u8 rank, u32 dims, and the values as
32-bit little-endian reals, row-major.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import DataError
from .optim import ParamStore

MAGIC = b"FPAM"
VERSION = 1


def save_checkpoint(path, store: ParamStore) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(store)))
        for name, p in store.items():
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(p.data.astype("<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint into an ordered name -> float32 array map."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise DataError(f"{path}: bad checkpoint magic")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    params: dict[str, np.ndarray] = {}
    pos = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos : pos + name_len].decode()
            pos += name_len
            (rank,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            end = pos + 4 * n
            if end > len(raw):
                raise DataError(f"{path}: truncated at parameter {name!r}")
            params[name] = np.frombuffer(raw[pos:end], dtype="<f4").reshape(dims)
            pos = end
    except struct.error as exc:
        raise DataError(f"{path}: truncated checkpoint: {exc}") from exc
    if pos != len(raw):
        raise DataError(f"{path}: {len(raw) - pos} trailing bytes after last parameter")
    return params


def restore_into(store: ParamStore, params: dict[str, np.ndarray]) -> None:
    """Copy checkpoint values into an existing store; names and dims must match."""
    if set(store.names()) != set(params):
        raise DataError("checkpoint parameter names do not match the target store")
    for name, value in params.items():
        slot = store[name]
        if slot.dims != value.shape:
            raise DataError(f"parameter {name}: dims {value.shape} vs store dims {slot.dims}")
        slot.data = value.astype(slot.dtype)
