"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``; the criterion
lines are printed even when output capture is on.
"""

import time

import numpy as np
import pytest

from cmo import bench, cli
from cmo.cache import AbortCause, CacheGeometry, CacheSim, MemRef
from cmo.checker import check_abort_freedom
from cmo.runtime import Runtime
from cmo.shadow import DataClass, InfeasibleError, SizeSpec, plan_layout
from cmo.trace import TxEnd

from oracles import BruteLRU, brute_force_layout

G = CacheGeometry()
CMO_ALGOS = ("shuffle", "merge_sort", "binary_search", "kmeans")
KM = {"k": 3, "iterations": 3}


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


def _params(name):
    return KM if name == "kmeans" else {}


def test_1_cache_oracle(report):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        # half the trace hammers a few sets so both levels evict; half is spread out
        hot = rng.integers(0, 4, 500) + G.llc_sets * rng.integers(0, 40, 500)
        cold = rng.integers(0, 1 << 20, 500)
        lines = rng.permutation(np.concatenate([hot, cold]))
        sim, ref = CacheSim(G), BruteLRU(G)
        mismatches += sum(sim.read(int(x) * 64).level_hit != ref.access(int(x)) for x in lines)
    dt = time.perf_counter() - t0
    report(1, mismatches == 0 and dt < 5, f"{mismatches} mismatches over 20x1000 accesses in {dt:.2f}s")


def _same_set(i):
    return i * G.llc_sets * G.line_size_bytes


def test_2_abort_semantics(report):
    sim = CacheSim(G)
    tx = sim.tx_begin()
    first = [sim.tx_access(tx, MemRef(_same_set(i), "write")).caused_abort for i in range(8)]
    ninth = sim.tx_access(tx, MemRef(_same_set(8), "write")).caused_abort
    dirty_ok = first == [None] * 8 and ninth is AbortCause.DIRTY_L1_EVICTION

    sim = CacheSim(G)
    tx = sim.tx_begin()
    first = [sim.tx_access(tx, MemRef(_same_set(i))).caused_abort for i in range(16)]
    last = sim.tx_access(tx, MemRef(_same_set(16))).caused_abort
    read_ok = first == [None] * 16 and last is AbortCause.READSET_EXCEEDS_LLC

    sim = CacheSim(G)
    for i in range(9):
        sim.read(_same_set(i))
    tx = sim.tx_begin()
    outs = [sim.tx_access(tx, MemRef(_same_set(i))) for i in range(9)]
    stats = sim.tx_end(tx)
    ro_ok = all(o.caused_abort is None for o in outs) and stats.misses == 0

    report(2, dirty_ok and read_ok and ro_ok,
           f"9 dirty lines abort={dirty_ok}, 17 read lines abort={read_ok}, "
           f"9 read-only lines in an 8-way L1 set commit={ro_ok}")


def test_3_layout_optimality(report):
    rng = np.random.default_rng(2024)
    checked, wrong = 0, 0
    while checked < 50:
        sizes = SizeSpec(int(rng.integers(0, 8192)), int(rng.integers(0, 480)),
                         int(rng.integers(1, 200_000)), int(rng.integers(1, 200_000)))
        ref = brute_force_layout(sizes, G)
        if ref is None:
            try:
                plan_layout(sizes, G)
                wrong += 1
            except InfeasibleError:
                pass
            continue
        lay = plan_layout(sizes, G)
        wrong += (min(lay.p3_lines, lay.p4_lines), lay.p3_lines + lay.p4_lines) != ref
        checked += 1
    r = plan_layout(SizeSpec(a1_lines=8, a2_lines=64, a3_lines=16, a4_lines=16), G).l1_set_ranges
    alloc = tuple(len(r[c]) for c in (DataClass.A2, DataClass.A4, DataClass.A3, DataClass.A1))
    report(3, wrong == 0 and alloc == (60, 2, 1, 1),
           f"{wrong} non-optimal of {checked} random specs; small leaky case sets "
           f"A2/A4/A3/A1 = {'/'.join(map(str, alloc))}")


def test_4_zero_abort_dynamic(report):
    rng = np.random.default_rng(4)
    bad = []
    for name in CMO_ALGOS:
        algo = bench.ALGORITHMS[name]
        for i in range(100):
            x = algo.make_input(rng, 64, _params(name))
            rt = Runtime("cmo_dynamic")
            algo.run(rt, x, seed=i, **_params(name))
            misses = sum(e.misses for e in rt.trace if isinstance(e, TxEnd))
            if not check_abort_freedom(rt.trace) or misses:
                bad.append((name, i))
    report(4, not bad, f"{len(bad)} of 400 dynamic runs had aborts or in-transaction misses"
           + (f" (first {bad[0]})" if bad else ""))


def test_5_obliviousness(report):
    t0 = time.perf_counter()
    rows = {name: bench.run_oblivious_audit(name, pairs=100, seed=5, n=64, params=_params(name))
            for name in CMO_ALGOS + ("bubble_sort", "quicksort")}
    dt = time.perf_counter() - t0
    clean = all(rows[n]["failures"] == 0 for n in CMO_ALGOS + ("bubble_sort",))
    control = rows["quicksort"]["failures"] >= 1
    summary = ", ".join(f"{n}={r['failures']}" for n, r in rows.items())
    report(5, clean and control and dt < 120,
           f"divergent pairs out of 100: {summary}; {dt:.0f}s")


def test_6_functional_correctness(report):
    rng = np.random.default_rng(6)
    bad, cells = [], 0
    for name, algo in bench.ALGORITHMS.items():
        for mode in algo.modes:
            for i in range(100):
                n = int(rng.integers(KM["k"], 65))
                row = bench.run_cell(algo, mode, n, i, _params(name))
                cells += 1
                if not (row["completed"] and row["output_ok"]):
                    bad.append((name, mode, n, i, row["reason"]))
    report(6, not bad, f"{len(bad)} of {cells} (algorithm, mode, instance) cells differ from "
           f"the unprotected reference" + (f" (first {bad[0]})" if bad else ""))


def test_7_tx_size_trends(report):
    small = bench.run_tx_sweep(64, [1, 2, 4, 8, 16, 32, 64])
    cpa = {r["param"]: r["cost_per_access"] for r in small}
    monotone = all(a >= b for a, b in zip(list(cpa.values()), list(cpa.values())[1:]))
    ratio = cpa[8] / cpa[64]
    big = bench.run_tx_sweep(65536, [8, 4096], dynamic=True)
    by = {r["mode"]: r for r in big}
    static8, huge, dyn = by["static:8"], by["static:4096"], by["cmo_dynamic"]
    ok = (monotone and ratio >= 2 and huge["completed"] is False and dyn["completed"]
          and dyn["mean_tx_size"] >= 8 * static8["mean_tx_size"])
    report(7, ok, f"N=64 cost/access nonincreasing={monotone}, t=8->64 ratio {ratio:.2f}; "
           f"N=65536 t=4096 completed={huge['completed']}; dynamic mean tx "
           f"{dyn['mean_tx_size']:.0f} vs static {static8['mean_tx_size']:.0f}")


def _cost(algo, mode, n, params):
    row = bench.run_cell(bench.ALGORITHMS[algo], mode, n, 0, params)
    assert row["completed"] and row["output_ok"], row
    return row["cost"]


def test_8_speedups(report):
    q = {"queries": 4096}
    search = [_cost("binary_search", "scan_baseline", n, q) / _cost("binary_search", "cmo_dynamic", n, q)
              for n in (4096, 16384, 65536)]
    sort = [_cost("sort", "word_oblivious", n, {}) / _cost("sort", "cmo_dynamic", n, {})
            for n in (2 ** 12, 2 ** 14, 2 ** 16)]
    nondecreasing = all(a <= b for r in (search, sort) for a, b in zip(r, r[1:]))
    report(8, search[-1] >= 50 and sort[-1] >= 10 and nondecreasing,
           "search scan/cmo " + "/".join(f"{r:.0f}" for r in search)
           + " at N=2^12/2^14/2^16; sort bubble/cmo " + "/".join(f"{r:.1f}" for r in sort)
           + " at N=2^12/2^14/2^16")


def test_9_determinism(report, tmp_path):
    specs = [
        ["--experiment", "tx_sweep", "--n", "64,256", "--tx-sizes", "1,8,64"],
        ["--experiment", "algo_compare", "--algo", "merge_sort", "--n", "64,128", "--seeds", "0,1"],
        ["--experiment", "algo_compare", "--algo", "kmeans", "--n", "48", "--k", "3"],
        ["--experiment", "oblivious_audit", "--algo", "shuffle", "--pairs", "3", "--n", "32"],
    ]
    differ = []
    for i, argv in enumerate(specs):
        out = tmp_path / f"run{i}.csv"
        blobs = []
        for _ in range(2):
            cli.main(argv + ["--out", str(out)])
            blobs.append((out.read_bytes(), (tmp_path / f"run{i}.csv.manifest.json").read_bytes()))
        if blobs[0] != blobs[1]:
            differ.append(argv[1])
    report(9, not differ, f"{len(specs) - len(differ)} of {len(specs)} CLI specs byte-identical "
           "across repeated runs (CSV and manifest)")
