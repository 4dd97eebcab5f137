"""Melbourne shuffle over the container API.

The array is viewed as b chunks of b elements, b = ceil(sqrt(N)); filler
records pad it to b*b and keep their position. Round 1 runs as two sections:
the first streams each chunk and threads its records into one linked list per
destination bucket (no dummies, small stash of list heads); the second walks
every list and emits exactly ``slots`` records per (chunk, bucket) cell,
filling with dummies. Round 2 reads each bucket's cells and places the real
records by target.

Targets are first randomized with a seeded public permutation so the cell
loads are random whatever permutation is requested.
"""

from __future__ import annotations

import math

import numpy as np

from ..runtime import NobRW, ObRO, ObRW, Runtime
from ._common import _Overflow, as_int64, from_int64, get_runtime

STASH_CONSTANT = 3  # stash lines <= STASH_CONSTANT * b


def cell_slots(b: int, tolerance: float = 1e-6) -> int:
    """Smallest per-cell slot count whose overflow bound over all b*b cells is below ``tolerance``.

    Cell loads are bounded by Binomial(b, 1/b).
    """
    if b <= 1:
        return 1
    q = 1.0 / b
    tail = 1.0
    for p in range(b + 1):
        tail -= math.comb(b, p) * q ** p * (1 - q) ** (b - p)
        if b * b * max(tail, 0.0) <= tolerance:
            return p
    return b


def _distribute(rt: Runtime, rec: np.ndarray, b: int):
    M = b * b
    src = ObRO(rec)
    links = ObRW(np.zeros((M, 3), dtype=np.int64))
    heads = ObRW(np.zeros(M, dtype=np.int64), width=8)
    counts = ObRW(np.zeros(M, dtype=np.int64), width=8)
    tally = NobRW(np.zeros((b, 2), dtype=np.int64), width=16)

    def body():
        for _ in range(b):
            for j in range(b):
                tally.write_at(j, (-1, 0))
            for t in range(b):
                r = src.read_next()
                j = int(r[1]) // b
                h = tally.read_at(j)
                head, n = int(h[0]), int(h[1])
                links.write_next((r[0], r[1], head))
                tally.write_at(j, (t, n + 1))
            for j in range(b):
                h = tally.read_at(j)
                heads.write_next(h[0])
                counts.write_next(h[1])

    rt.run(body, [src, links, heads, counts, tally])
    return links.data, heads.data, counts.data


def _pad(rt: Runtime, links, heads, counts, b: int, slots: int) -> np.ndarray:
    recs, hs, cs = ObRO(links), ObRO(heads, width=8), ObRO(counts, width=8)
    cells = ObRW(np.zeros((b * b * slots, 2), dtype=np.int64))
    stash = NobRW(np.zeros((b, 3), dtype=np.int64))
    meta = NobRW(np.zeros((b, 2), dtype=np.int64), width=16)
    check_stash(stash, meta, b=b)

    def body():
        overflow = False
        for _ in range(b):
            for t in range(b):
                stash.write_at(t, recs.read_next())
            for j in range(b):
                meta.write_at(j, (hs.read_next(), cs.read_next()))
            for j in range(b):
                m = meta.read_at(j)
                cur, n = int(m[0]), int(m[1])
                overflow |= n > slots
                for s in range(slots):
                    r = stash.read_at(cur if cur >= 0 else 0)
                    if s < n:
                        cells.write_next((r[0], r[1]))
                        cur = int(r[2])
                    else:
                        cells.write_next((0, -1))
        return overflow

    if rt.run(body, [recs, hs, cs, cells, stash, meta]):
        raise _Overflow
    return cells.data


def _clean(rt: Runtime, cells: np.ndarray, b: int, slots: int) -> np.ndarray:
    # cells are stored chunk-major; read them bucket by bucket
    idx = np.arange(b * b * slots, dtype=np.int64).reshape(b, b, slots)
    src = ObRO(cells, order=idx.transpose(1, 0, 2).ravel())
    out = ObRW(np.zeros(b * b, dtype=np.int64), width=8)
    stash = NobRW(np.zeros(b + 1, dtype=np.int64), width=8)
    check_stash(stash, b=b)

    def body():
        for j in range(b):
            lo = j * b
            for _ in range(b * slots):
                r = src.read_next()
                tgt = int(r[1])
                stash.write_at(tgt - lo if tgt >= 0 else b, r[0])
            for t in range(b):
                out.write_next(stash.read_at(t))

    rt.run(body, [src, out, stash])
    return out.data


def check_stash(*containers, b: int) -> None:
    lines = sum(c.n_lines for c in containers)
    assert lines <= STASH_CONSTANT * b + 2, f"stash of {lines} lines exceeds bound"


def _pass(rt: Runtime, values: np.ndarray, targets: np.ndarray, b: int, slots: int) -> np.ndarray:
    rec = np.zeros((b * b, 3), dtype=np.int64)
    rec[:, 0], rec[:, 1] = values, targets
    links, heads, counts = _distribute(rt, rec, b)
    cells = _pad(rt, links, heads, counts, b, slots)
    return _clean(rt, cells, b, slots)


def melbourne_shuffle(data, perm, mode: str = "cmo_dynamic", seed: int = 0, *,
                      runtime: Runtime | None = None, slots: int | None = None,
                      randomize: bool = True, retries: int = 16) -> np.ndarray:
    """Return ``out`` with ``out[perm[i]] = data[i]``.

    ``randomize=False`` skips the pre-randomizing pass; only safe when ``perm``
    is itself uniformly random (as in shuffle-then-sort).
    """
    rt = get_runtime(mode, runtime)
    values, dtype = as_int64(data)
    perm = np.asarray(perm, dtype=np.int64)
    n = len(values)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("perm must be a permutation of range(len(data))")
    if n == 0:
        return from_int64(values.copy(), dtype)
    b = math.isqrt(n - 1) + 1
    M = b * b
    slots = slots or cell_slots(b)
    # filler records sit at fixed positions spread over chunks and buckets
    # (at most two per chunk) and stay where they are
    k = np.arange(M - n, dtype=np.int64)
    is_pad = np.zeros(M, dtype=bool)
    is_pad[(k % b) * b + k // b] = True
    real = np.flatnonzero(~is_pad)
    padded = np.zeros(M, dtype=np.int64)
    padded[real] = values
    full = np.arange(M, dtype=np.int64)
    full[real] = real[perm]
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        try:
            if randomize:
                rho = rng.permutation(M)
                mid = _pass(rt, padded, rho, b, slots)
                sigma = np.empty(M, dtype=np.int64)
                sigma[rho] = full
                out = _pass(rt, mid, sigma, b, slots)
            else:
                out = _pass(rt, padded, full, b, slots)
        except _Overflow:
            continue
        return from_int64(out[real], dtype)
    raise OverflowError(f"shuffle overflowed {retries} times")
