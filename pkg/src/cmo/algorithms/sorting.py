"""Sorting baselines and the shuffle-then-quicksort sort."""

from __future__ import annotations

import numpy as np
from numba import njit

from ..runtime import NobRW, PlainSection, Runtime
from ._common import as_int64, from_int64, get_runtime
from .mergesort import _from_keys, _to_keys
from .shuffle import melbourne_shuffle


@njit(cache=True)
def _bubble(x):
    n = x.shape[0]
    for _ in range(n - 1):
        for i in range(n - 1):
            a, b = x[i], x[i + 1]
            x[i] = min(a, b)
            x[i + 1] = max(a, b)


def bubble_pattern(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Element indices and write flags of one compare-exchange pass."""
    i = np.arange(max(n - 1, 0), dtype=np.int64)
    idx = np.stack([i, i + 1, i, i + 1], axis=1).ravel()
    writes = np.tile(np.array([False, False, True, True]), len(i))
    return idx, writes


def word_oblivious_sort(data, mode: str = "word_oblivious", *,
                        runtime: Runtime | None = None) -> np.ndarray:
    """Bubble sort with an unconditional compare-exchange on every adjacent pair.

    Runs outside any section; the access sequence is a function of N only.
    """
    rt = get_runtime(mode, runtime, sort=True)
    values, dtype = as_int64(data)
    keys = _to_keys(values, dtype).copy()
    n = len(keys)
    c = NobRW(keys)
    c._bind(rt.machine)
    if n > 1:
        if c.width != rt.machine.line_size:
            raise ValueError("bubble sort expects one element per line")
        idx, writes = bubble_pattern(n)
        rt.machine.repeat(c._base + idx, writes, n - 1)
        _bubble(keys)
    return from_int64(_from_keys(keys, dtype), dtype)


@njit(cache=True)
def _quicksort_traced(x):
    """In-place Lomuto quicksort; returns the (index, is_write) access trace."""
    cap = 16
    idx = np.empty(cap, dtype=np.int64)
    wr = np.empty(cap, dtype=np.bool_)
    m = 0
    stack = np.empty(2 * x.shape[0] + 2, dtype=np.int64)
    top = 0
    if x.shape[0] > 1:
        stack[0], stack[1] = 0, x.shape[0] - 1
        top = 2
    while top > 0:
        top -= 2
        lo, hi = stack[top], stack[top + 1]
        if m + 6 * (hi - lo + 1) + 8 > cap:
            while m + 6 * (hi - lo + 1) + 8 > cap:
                cap *= 2
            idx2 = np.empty(cap, dtype=np.int64)
            wr2 = np.empty(cap, dtype=np.bool_)
            idx2[:m], wr2[:m] = idx[:m], wr[:m]
            idx, wr = idx2, wr2
        pivot = x[hi]
        idx[m], wr[m] = hi, False
        m += 1
        i = lo
        for j in range(lo, hi):
            v = x[j]
            idx[m], wr[m] = j, False
            m += 1
            if v < pivot:
                t = x[i]
                x[i], x[j] = v, t
                idx[m], wr[m] = i, False
                idx[m + 1], wr[m + 1] = i, True
                idx[m + 2], wr[m + 2] = j, True
                m += 3
                i += 1
        t = x[i]
        x[i], x[hi] = x[hi], t
        idx[m], wr[m] = i, False
        idx[m + 1], wr[m + 1] = i, True
        idx[m + 2], wr[m + 2] = hi, True
        m += 3
        if i - 1 > lo:
            stack[top], stack[top + 1] = lo, i - 1
            top += 2
        if hi > i + 1:
            stack[top], stack[top + 1] = i + 1, hi
            top += 2
    return idx[:m], wr[:m]


def _quicksort_body(arr: NobRW):
    """Same algorithm as ``_quicksort_traced``, through a container."""
    n = len(arr)
    stack = [(0, n - 1)] if n > 1 else []
    while stack:
        lo, hi = stack.pop()
        pivot = int(arr.read_at(hi))
        i = lo
        for j in range(lo, hi):
            v = int(arr.read_at(j))
            if v < pivot:
                t = int(arr.read_at(i))
                arr.write_at(i, v)
                arr.write_at(j, t)
                i += 1
        t = int(arr.read_at(i))
        arr.write_at(i, pivot)
        arr.write_at(hi, t)
        if i - 1 > lo:
            stack.append((lo, i - 1))
        if hi > i + 1:
            stack.append((i + 1, hi))


def plain_quicksort(keys: np.ndarray, rt: Runtime) -> np.ndarray:
    """Quicksort outside any transaction; accesses go straight to the cache model."""
    keys = keys.copy()
    c = NobRW(keys)
    c._bind(rt.machine)
    idx, wr = _quicksort_traced(keys)
    if len(idx):
        per = c.width // rt.machine.line_size if c.width > rt.machine.line_size else 1
        lines = c._base + (idx * c.width) // rt.machine.line_size
        if per > 1:
            lines = (lines[:, None] + np.arange(per)).ravel()
            wr = np.repeat(wr, per)
        rt.machine.plain(lines, wr)
    return keys


def quicksort_in_section(data, mode: str = "cmo_dynamic", *,
                         runtime: Runtime | None = None) -> np.ndarray:
    """Quicksort with the whole array as NobRW inside one leaky section.

    Under ``manual`` this is the single-transaction baseline. Under the
    partitioned policies it serves as a leaky control: the number of accesses
    per transaction depends on the data.
    """
    rt = get_runtime(mode, runtime)
    values, dtype = as_int64(data)
    arr = NobRW(_to_keys(values, dtype).copy())
    rt.run(lambda: _quicksort_body(arr), [arr])
    return from_int64(_from_keys(arr.data, dtype), dtype)


def shuffle_sort(data, mode: str = "cmo_dynamic", seed: int = 0, *,
                 runtime: Runtime | None = None) -> np.ndarray:
    """Sort by mode: shuffle then quicksort for the oblivious modes.

    ``word_oblivious`` uses bubble sort, ``manual`` a single-transaction
    quicksort, ``plain_unprotected`` a bare quicksort.
    """
    name = mode.partition(":")[0]
    if name == "word_oblivious":
        return word_oblivious_sort(data, runtime=runtime)
    if name == "manual":
        return quicksort_in_section(data, mode, runtime=runtime)
    rt = get_runtime(mode, runtime, sort=True)
    values, dtype = as_int64(data)
    keys = _to_keys(values, dtype)
    if name != "plain_unprotected":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(keys))
        keys = melbourne_shuffle(keys, perm, runtime=rt, seed=int(rng.integers(2 ** 63)),
                                 randomize=False)
    out = plain_quicksort(keys, rt)
    return from_int64(_from_keys(out, dtype), dtype)
