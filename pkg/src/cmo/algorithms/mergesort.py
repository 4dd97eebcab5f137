"""Oblivious merge sort: shuffle, then bottom-up merges with a bounded buffer.

Each merge is one section. The two input runs are read alternately (a public
schedule), every element goes through a min-heap kept in a NobRW buffer, and
the smallest element is emitted once the buffer is full. Because the input was
randomly shuffled, the runs interleave roughly evenly and a buffer of about
c * sqrt(n) elements keeps the output sorted; if an element arrives that is
smaller than one already emitted, the attempt is discarded and retried with
fresh randomness.

Heap operations walk a fixed number of levels for a given heap size, so the
per-transaction access counts depend only on the run lengths.
"""

from __future__ import annotations

import math

import numpy as np

from ..runtime import NobRW, ObRO, ObRW, Runtime
from ..shadow import SizeSpec, plan_layout
from ._common import _Overflow, as_int64, from_int64, get_runtime
from .shuffle import melbourne_shuffle

BUFFER_CONSTANT = 3.0


def buffer_capacity(n: int, c: float = BUFFER_CONSTANT) -> int:
    return min(n, math.ceil(c * math.sqrt(n)))


class _Heap:
    """Binary min-heap over a NobRW container with size-determined access counts."""

    def __init__(self, store: NobRW):
        self.h = store
        self.size = 0

    def push(self, x: int) -> None:
        h, pos = self.h, self.size
        h.write_at(pos, x)
        self.size += 1
        for _ in range((pos + 1).bit_length() - 1):
            parent = (pos - 1) // 2
            pv, cv = int(h.read_at(parent)), int(h.read_at(pos))
            lo, hi = (cv, pv) if cv < pv else (pv, cv)
            h.write_at(parent, lo)
            h.write_at(pos, hi)
            pos = parent

    def pop(self) -> int:
        h = self.h
        top = int(h.read_at(0))
        n = self.size - 1
        h.write_at(0, int(h.read_at(n)))
        self.size = n
        pos = 0
        for _ in range(max(n, 1).bit_length() - 1):
            left, right = 2 * pos + 1, 2 * pos + 2
            pv = int(h.read_at(pos))
            lv = int(h.read_at(left if left < n else 0))
            rv = int(h.read_at(right if right < n else 0))
            m, mv = pos, pv
            if left < n and lv < mv:
                m, mv = left, lv
            if right < n and rv < mv:
                m, mv = right, rv
            h.write_at(pos, mv)
            h.write_at(m, pv)
            pos = m
        return top


def merge_schedule(a: int, b: int) -> list[bool]:
    """Public read order: True reads from the first run. Alternates while both last."""
    out, i, j = [], 0, 0
    while i < a or j < b:
        take_a = i < a and (j >= b or i <= j)
        out.append(take_a)
        i, j = i + take_a, j + (not take_a)
    return out


def _merge(rt: Runtime, src: np.ndarray, dst: np.ndarray, lo: int, mid: int, hi: int,
           c: float) -> None:
    A, B, O = ObRO(src[lo:mid]), ObRO(src[mid:hi]), ObRW(dst[lo:hi])
    n = hi - lo
    cap = buffer_capacity(n, c)
    store = NobRW(np.zeros(cap, dtype=np.int64))
    schedule = merge_schedule(mid - lo, hi - mid)

    def body():
        heap = _Heap(store)
        last = None
        bad = False
        for take_a in schedule:
            x = int(A.read_next() if take_a else B.read_next())
            bad |= last is not None and x < last
            heap.push(x)
            if heap.size == cap:
                last = heap.pop()
                O.write_next(last)
        while heap.size:
            O.write_next(heap.pop())
        return bad

    if rt.run(body, [A, B, O, store]):
        raise _Overflow


def oblivious_merge_sort(data, mode: str = "cmo_dynamic", seed: int = 0, *,
                         runtime: Runtime | None = None, c: float = BUFFER_CONSTANT,
                         retries: int = 16) -> np.ndarray:
    """Sort ascending. Integer and float64 data are compared by value."""
    rt = get_runtime(mode, runtime)
    values, dtype = as_int64(data)
    keys = _to_keys(values, dtype)
    n = len(keys)
    if rt.transactional and n > 1:
        # the last merge has the largest buffer; fail before doing any work
        plan_layout(SizeSpec(a2_lines=buffer_capacity(n, c), a3_lines=n, a4_lines=n),
                    rt.machine.geometry)
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        perm = rng.permutation(n)
        shuffled = melbourne_shuffle(keys, perm, runtime=rt,
                                     seed=int(rng.integers(2 ** 63)), randomize=False)
        src, dst = shuffled.copy(), np.zeros(n, dtype=np.int64)
        try:
            width = 1
            while width < n:
                for lo in range(0, n, 2 * width):
                    mid, hi = min(lo + width, n), min(lo + 2 * width, n)
                    _merge(rt, src, dst, lo, mid, hi, c)
                src, dst = dst, src
                width *= 2
        except _Overflow:
            continue
        return from_int64(_from_keys(src, dtype), dtype)
    raise OverflowError(f"merge buffer overflowed {retries} times")


def _to_keys(values: np.ndarray, dtype) -> np.ndarray:
    """Order-preserving int64 keys for float64 bit patterns."""
    if dtype != np.float64:
        return values
    return np.where(values < 0, values ^ np.int64(0x7FFFFFFFFFFFFFFF), values)


def _from_keys(keys: np.ndarray, dtype) -> np.ndarray:
    if dtype != np.float64:
        return keys
    return np.where(keys < 0, keys ^ np.int64(0x7FFFFFFFFFFFFFFF), keys)
