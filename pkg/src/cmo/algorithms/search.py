from __future__ import annotations

import numpy as np

from ..runtime import NobRO, ObRO, ObRW, Runtime
from ._common import as_int64, get_runtime

NOT_FOUND = -1


def search_steps(n: int) -> int:
    """Halving steps the lower-bound loop takes for ``n`` sorted elements."""
    steps, length = 0, n
    while length > 1:
        length -= length // 2
        steps += 1
    return steps


def streaming_binary_search(data, queries, mode: str = "cmo_dynamic", *,
                            runtime: Runtime | None = None) -> np.ndarray:
    """Index of the first occurrence of each query in sorted ``data``, or -1.

    The sorted array is held as NobRO (it must fit the cache), queries stream
    in as ObRO and results stream out as ObRW. Every query performs the same
    number of probes.
    """
    rt = get_runtime(mode, runtime)
    keys, _ = as_int64(data)
    q, _ = as_int64(queries)
    if np.asarray(data).dtype == np.float64:
        raise TypeError("search keys must be integers")
    n = len(keys)
    table, stream = NobRO(keys), ObRO(q)
    out = ObRW(np.full(len(q), NOT_FOUND, dtype=np.int64))
    steps = search_steps(n)

    def body():
        for _ in range(len(q)):
            x = int(stream.read_next())
            if n == 0:
                out.write_next(NOT_FOUND)
                continue
            base, length = 0, n
            for _ in range(steps):
                half = length // 2
                if int(table.read_at(base + half)) < x:
                    base += half
                length -= half
            idx = base + (int(table.read_at(base)) < x)
            hit = int(table.read_at(min(idx, n - 1))) == x and idx < n
            out.write_next(idx if hit else NOT_FOUND)

    rt.run(body, [table, stream, out])
    return out.data
