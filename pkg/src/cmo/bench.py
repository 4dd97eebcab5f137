"""Experiments: transaction-size sweep, algorithm comparison, obliviousness audit.

Every number reported is in simulated cost units (see :class:`~cmo.cache.CostModel`).
Rows are plain dicts with the columns in :data:`COLUMNS`; :func:`write_csv`
writes them deterministically.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import algorithms as alg
from .cache import CacheGeometry, CacheSim, CostModel, FootprintOverflow, cost_of
from .checker import check_pairwise
from .runtime import CannotComplete, ObRW, Runtime
from .shadow import InfeasibleError
from .trace import TxAbort, TxBegin, TxEnd, TxTrace

log = logging.getLogger(__name__)

COLUMNS = ("experiment", "algorithm", "mode", "n", "param", "seed", "cost", "cost_per_access",
           "tx_count", "mean_tx_size", "accesses", "aborts", "completed", "reason", "output_ok")


def _trace_stats(trace: TxTrace) -> dict:
    sizes = [e.accesses for e in trace if isinstance(e, TxEnd)]
    aborts = sum(isinstance(e, TxAbort) for e in trace)
    return {"tx_count": len(sizes), "mean_tx_size": float(np.mean(sizes)) if sizes else 0.0,
            "aborts": aborts}


def _row(**kw) -> dict:
    row = {c: "" for c in COLUMNS}
    row.update(kw)
    return row


# transaction-size sweep

def run_tx_sweep(n: int, tx_sizes, cost_model: CostModel | None = None, *, passes: int = 16,
                 retries: int = 8, geometry: CacheGeometry | None = None,
                 dynamic: bool = False) -> list[dict]:
    """Write every line of an n-line array ``passes`` times, t writes per transaction.

    Transactions are raw: no shadow memory and no preloading, so first-touch
    misses land inside them. A transaction that aborts is retried up to
    ``retries`` times; after that the run stops with ``completed = False``.
    With ``dynamic=True`` a row for the same loop under the Dynamic policy
    (the array as ObRW, one section per pass) is appended.
    """
    model = cost_model or CostModel()
    rows = []
    for t in tx_sizes:
        if t < 1:
            raise ValueError("transaction sizes must be >= 1")
        sim = CacheSim(geometry)
        trace = TxTrace()
        lines = np.arange(n, dtype=np.int64)
        completed, reason = True, ""
        for _ in range(passes):
            for lo in range(0, n, t):
                chunk = lines[lo:lo + t]
                for _ in range(retries + 1):
                    tx = sim.tx_begin()
                    trace.append(TxBegin(tx.tx_id))
                    _, idx = sim.access_lines(chunk, True, tx)
                    if idx < 0:
                        st = sim.tx_end(tx)
                        trace.append(TxEnd(st.tx_id, st.accesses, st.hits, st.misses))
                        break
                    trace.append(TxAbort(tx.tx_id, tx.cause.value, tx.instruction_count,
                                         tx.hits, tx.misses))
                else:
                    completed, reason = False, f"transaction of {len(chunk)} writes always aborts"
                    break
            if not completed:
                break
        cost = cost_of(trace, model)
        accesses = n * passes
        rows.append(_row(experiment="tx_sweep", algorithm="array_write", mode=f"static:{t}",
                         n=n, param=t, seed=0, cost=cost, cost_per_access=cost / accesses,
                         accesses=accesses, completed=completed, reason=reason,
                         **_trace_stats(trace)))
    if dynamic:
        rt = Runtime("cmo_dynamic", geometry)
        arr = ObRW(np.zeros(n, dtype=np.int64))
        completed, reason = True, ""
        try:
            for _ in range(passes):
                rt.run(lambda: [arr.write_next(1) for _ in range(n)], [arr])
        except (CannotComplete, InfeasibleError) as e:
            completed, reason = False, str(e)
        cost = rt.machine.cost(model)
        accesses = n * passes
        rows.append(_row(experiment="tx_sweep", algorithm="array_write", mode="cmo_dynamic",
                         n=n, param="", seed=0, cost=cost, cost_per_access=cost / accesses,
                         accesses=accesses, completed=completed, reason=reason,
                         **_trace_stats(rt.trace)))
    return rows


# algorithm registry

@dataclass(frozen=True)
class Algorithm:
    name: str
    modes: tuple[str, ...]
    make_input: Callable[[np.random.Generator, int, dict], Any]
    run: Callable[..., Any]          # run(runtime, x, seed=..., **params)
    reference: Callable[..., Any]    # reference(x, seed=..., **params)
    exact: bool = True


def _ints(rng, n, _):
    return rng.integers(0, 2 ** 31, n, dtype=np.int64)


def _shuffle_input(rng, n, _):
    return (rng.integers(0, 2 ** 31, n, dtype=np.int64), rng.permutation(n))


def _search_input(rng, n, p):
    data = np.sort(rng.choice(4 * max(n, 1), size=n, replace=False)).astype(np.int64)
    q = p.get("queries", 64)
    present = rng.choice(data, size=q // 2) if n else np.zeros(0, dtype=np.int64)
    absent = rng.integers(0, 4 * max(n, 1), q - len(present), dtype=np.int64)
    queries = np.concatenate([present, absent]).astype(np.int64)
    return (data, rng.permutation(queries))


def _kmeans_input(rng, n, p):
    k = p.get("k", 4)
    centers = rng.uniform(-10, 10, (k, 2))
    return centers[rng.integers(0, k, n)] + rng.normal(0, 1, (n, 2))


def _ref_shuffle(x, seed=0, **_):
    data, perm = x
    out = np.empty_like(data)
    out[perm] = data
    return out


def _ref_search(x, seed=0, **_):
    data, queries = x
    idx = np.searchsorted(data, queries)
    hit = (idx < len(data)) & (data[np.minimum(idx, max(len(data) - 1, 0))] == queries) \
        if len(data) else np.zeros(len(queries), dtype=bool)
    return np.where(hit, idx, alg.NOT_FOUND)


def _ref_kmeans(x, seed=0, k=4, iterations=5, **_):
    return alg.kmeans(x, k, iterations, "plain_unprotected", seed)


_SORT_MODES = ("cmo_dynamic", "cmo_static", "scan_baseline", "plain_unprotected")

ALGORITHMS: dict[str, Algorithm] = {a.name: a for a in (
    Algorithm("shuffle", _SORT_MODES, _shuffle_input,
              lambda rt, x, seed=0, **_: alg.melbourne_shuffle(*x, seed=seed, runtime=rt),
              _ref_shuffle),
    Algorithm("merge_sort", _SORT_MODES, _ints,
              lambda rt, x, seed=0, **_: alg.oblivious_merge_sort(x, seed=seed, runtime=rt),
              lambda x, **_: np.sort(x)),
    Algorithm("binary_search", _SORT_MODES, _search_input,
              lambda rt, x, seed=0, **_: alg.streaming_binary_search(*x, runtime=rt),
              _ref_search),
    Algorithm("kmeans", _SORT_MODES, _kmeans_input,
              lambda rt, x, seed=0, k=4, iterations=5, **_:
                  alg.kmeans(x, k, iterations, seed=seed, runtime=rt),
              _ref_kmeans, exact=False),
    Algorithm("sort", _SORT_MODES + ("word_oblivious", "manual"), _ints,
              lambda rt, x, seed=0, **_: alg.shuffle_sort(x, rt.mode, seed, runtime=rt),
              lambda x, **_: np.sort(x)),
    Algorithm("bubble_sort", ("word_oblivious",), _ints,
              lambda rt, x, seed=0, **_: alg.word_oblivious_sort(x, runtime=rt),
              lambda x, **_: np.sort(x)),
    Algorithm("quicksort", ("cmo_dynamic", "manual", "plain_unprotected"), _ints,
              lambda rt, x, seed=0, **_: alg.quicksort_in_section(x, rt.mode, runtime=rt),
              lambda x, **_: np.sort(x)),
)}

TRANSACTIONAL = ("cmo_dynamic", "cmo_static", "manual")


def _outputs_equal(a, b, exact: bool) -> bool:
    if isinstance(a, tuple):
        return all(_outputs_equal(x, y, exact) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    if exact:
        return bool(np.array_equal(a, b))
    return bool(np.allclose(a, b, rtol=1e-9, atol=0.0))


def get_algorithm(name: str) -> Algorithm:
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}")


def run_cell(algo: Algorithm, mode: str, n: int, seed: int, params: dict,
             geometry: CacheGeometry | None = None, cost_model: CostModel | None = None,
             experiment: str = "algo_compare") -> dict:
    """Run one (algorithm, mode, N, seed) cell and check its output against the reference."""
    if mode.partition(":")[0] not in algo.modes:
        raise ValueError(f"{algo.name} does not support mode {mode}")
    x = algo.make_input(np.random.default_rng(seed), n, params)
    transactional = mode.partition(":")[0] in TRANSACTIONAL
    engines = ["lru"] if transactional else ["footprint", "lru"]
    base = dict(experiment=experiment, algorithm=algo.name, mode=mode, n=n,
                param=json.dumps(params, sort_keys=True), seed=seed)
    for engine in engines:
        rt = Runtime(mode, geometry, engine)
        try:
            out = algo.run(rt, x, seed=seed, **params)
        except FootprintOverflow:
            continue
        except (InfeasibleError, CannotComplete, OverflowError) as e:
            return _row(**base, cost="", completed=False, reason=f"{type(e).__name__}: {e}",
                        **_trace_stats(rt.trace))
        cost = rt.machine.cost(cost_model)
        ref = algo.reference(x, seed=seed, **params)
        accesses = sum(e.accesses for e in rt.trace if isinstance(e, (TxEnd, TxAbort)))
        return _row(**base, cost=cost, cost_per_access="", accesses=accesses, completed=True,
                    output_ok=_outputs_equal(out, ref, algo.exact), **_trace_stats(rt.trace))
    raise AssertionError("unreachable")


def run_algo_compare(algorithm: str, modes, ns, seeds, params: dict | None = None, *,
                     geometry: CacheGeometry | None = None,
                     cost_model: CostModel | None = None) -> list[dict]:
    algo = get_algorithm(algorithm)
    params = params or {}
    rows = [run_cell(algo, m, n, s, params, geometry, cost_model)
            for n in ns for m in modes for s in seeds]
    return sorted(rows, key=lambda r: (r["n"], r["mode"], r["seed"]))


# audit

AUDIT_MODE = {"bubble_sort": "word_oblivious", "quicksort": "cmo_dynamic"}


def run_oblivious_audit(algorithm: str, mode: str | None = None, pairs: int = 100,
                        seed: int = 0, n: int = 64, params: dict | None = None, *,
                        geometry: CacheGeometry | None = None,
                        granularity: str = "line") -> dict:
    """Compare the observable traces of ``pairs`` random equal-shape input pairs."""
    algo = get_algorithm(algorithm)
    mode = mode or AUDIT_MODE.get(algorithm, "cmo_dynamic")
    params = params or {}
    if pairs == 0:
        log.warning("audit of %s with 0 pairs passes vacuously", algorithm)
    rng = np.random.default_rng(seed)
    failures, first = 0, None
    for i in range(pairs):
        a, b = algo.make_input(rng, n, params), algo.make_input(rng, n, params)
        engine = "lru" if mode.partition(":")[0] in TRANSACTIONAL else None
        v = check_pairwise(algo.run, params, a, b, seed=seed + i, mode=mode, geometry=geometry,
                           engine=engine, granularity=granularity)
        if not v:
            failures += 1
            if first is None:
                first = f"pair {i}: {v.report()}"
    return {"experiment": "oblivious_audit", "algorithm": algorithm, "mode": mode, "n": n,
            "pairs": pairs, "failures": failures, "passed": failures == 0,
            "first_failure": first or ""}


AUDIT_COLUMNS = ("experiment", "algorithm", "mode", "n", "pairs", "failures", "passed",
                 "first_failure")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows, columns=COLUMNS) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
