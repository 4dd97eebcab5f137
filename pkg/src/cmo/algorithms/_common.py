from __future__ import annotations

import numpy as np

from ..runtime import Runtime


class _Overflow(Exception):
    """A randomized stash or buffer filled up; the attempt must be discarded."""


def get_runtime(mode: str, runtime: Runtime | None, *, sort: bool = False) -> Runtime:
    if mode.partition(":")[0] == "word_oblivious" and not sort:
        raise ValueError("word_oblivious is only defined for sorting")
    if runtime is None:
        return Runtime(mode)
    return runtime


def as_int64(data) -> tuple[np.ndarray, np.dtype]:
    """Bit-preserving int64 view of 1-D numeric data, plus the original dtype."""
    arr = np.ascontiguousarray(data)
    if arr.ndim != 1:
        raise ValueError("expected a 1-D array")
    dtype = arr.dtype
    if dtype == np.float64:
        return arr.view(np.int64).copy(), dtype
    if not np.issubdtype(dtype, np.integer) and dtype != np.bool_:
        raise TypeError(f"unsupported element type {dtype}")
    return arr.astype(np.int64), dtype


def from_int64(arr: np.ndarray, dtype: np.dtype) -> np.ndarray:
    if dtype == np.float64:
        return arr.view(np.float64)
    return arr.astype(dtype)
