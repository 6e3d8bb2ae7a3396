"""Canonical text format for tensors: golden vectors and debug dumps.

Line 1 is ``dims: d0 d1 ...``; the remaining lines hold the values row-major,
whitespace-separated, formatted ``%.9e``.
"""
from __future__ import annotations

import numpy as np

from .errors import DataError


def save_tensor_text(path, data: np.ndarray) -> None:
    arr = np.asarray(data, dtype=np.float64)
    with open(path, "w") as f:
        f.write("dims: " + " ".join(str(d) for d in arr.shape) + "\n")
        flat = arr.reshape(-1)
        row = arr.shape[-1] if arr.ndim else 1
        for start in range(0, flat.size, row):
            f.write(" ".join("%.9e" % v for v in flat[start : start + row]) + "\n")


def load_tensor_text(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline()
        if not header.startswith("dims:"):
            raise DataError(f"{path}: missing 'dims:' header line")
        try:
            dims = tuple(int(t) for t in header[5:].split())
            values = np.array(f.read().split(), dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}: unparseable tensor text: {exc}") from exc
    expected = int(np.prod(dims)) if dims else 1
    if values.size != expected:
        raise DataError(f"{path}: expected {expected} values for dims {dims}, found {values.size}")
    return values.reshape(dims)
