from __future__ import annotations

import numpy as np

from ..runtime import NobRO, NobRW, ObRO, ObRW, PlainSection, Runtime
from ._common import get_runtime


def _width(values_per_row: int, line: int = 64) -> int:
    return -(-8 * values_per_row // line) * line


def initial_centroids(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k distinct points picked by a seeded (public) index draw."""
    idx = np.random.default_rng(seed).choice(len(points), size=k, replace=False)
    return points[np.sort(idx)].copy()


def kmeans(points, k: int, iterations: int, mode: str = "cmo_dynamic", seed: int = 0, *,
           runtime: Runtime | None = None, init=None) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm for a fixed number of iterations.

    Each iteration runs two sections. The assignment pass streams the points
    (ObRO) against the centroids (NobRO) and streams out the nearest-centroid
    index (ObRW); distance ties go to the lower index. The accumulation pass
    streams points and assignments and adds each point into a per-cluster
    (sum, count) accumulator (NobRW). Centroids are then recomputed outside
    any section; an empty cluster keeps its centroid.

    Returns (centroids, assignment).
    """
    rt = get_runtime(mode, runtime)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= number of points")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    cent = np.array(init, dtype=np.float64).reshape(k, d) if init is not None \
        else initial_centroids(pts, k, seed)
    assign = np.zeros(n, dtype=np.int64)
    pw, aw = _width(d), _width(d + 1)

    for _ in range(iterations):
        P, C = ObRO(pts, width=pw), NobRO(cent, width=pw)
        A = ObRW(assign, width=8)

        def km1():
            for _ in range(n):
                p = P.read_next()
                best, bd = 0, None
                for j in range(k):
                    dist = float(np.sum((p - C.read_at(j)) ** 2))
                    if bd is None or dist < bd:
                        best, bd = j, dist
                A.write_next(best)

        rt.run(km1, [P, C, A])

        acc = np.zeros((k, d + 1), dtype=np.float64)
        P, A2, S = ObRO(pts, width=pw), ObRO(assign, width=8), NobRW(acc, width=aw)

        def km2():
            for _ in range(n):
                p, a = P.read_next(), int(A2.read_next())
                row = S.read_at(a).copy()
                row[:d] += p
                row[d] += 1
                S.write_at(a, row)

        rt.run(km2, [P, A2, S])

        # public update loop: touch every accumulator and centroid once
        C = NobRW(cent, width=pw)
        sec = PlainSection(rt.machine, [S, C])
        for j in range(k):
            row = S.read_at(j)
            c = C.read_at(j)
            C.write_at(j, row[:d] / row[d] if row[d] else c)
        sec.end()
    return cent, assign
