"""Flat binary and CSV dataset files.

Binary files hold little-endian fixed-width records with no header; the
reader needs the dtype and, for multi-column records, the column count.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def save_binary(path, data) -> None:
    arr = np.asarray(data)
    arr.astype(arr.dtype.newbyteorder("<"), copy=False).tofile(path)


def load_binary(path, dtype="int64", columns: int | None = None) -> np.ndarray:
    arr = np.fromfile(path, dtype=np.dtype(dtype).newbyteorder("<"))
    arr = arr.astype(np.dtype(dtype), copy=False)
    return arr if columns is None else arr.reshape(-1, columns)


def save_csv(path, data) -> None:
    arr = np.asarray(data)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for row in (arr[:, None] if arr.ndim == 1 else arr):
            w.writerow([repr(float(v)) if arr.dtype.kind == "f" else int(v) for v in row])


def load_csv(path, dtype="int64") -> np.ndarray:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    arr = np.array(rows, dtype=np.dtype(dtype)) if rows else np.zeros((0, 1), dtype=dtype)
    return arr[:, 0] if arr.shape[1] == 1 else arr


def load(path, dtype="int64", columns: int | None = None) -> np.ndarray:
    """Dispatch on extension: ``.csv`` is text, anything else is flat binary."""
    if Path(path).suffix.lower() == ".csv":
        return load_csv(path, dtype)
    return load_binary(path, dtype, columns)
