import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmo.cache import (
    AbortCause, CacheGeometry, CacheSim, CostModel, FootprintOverflow, FootprintSim, MemRef,
    TxError, cost_of, line_of, read_config,
)
from cmo.trace import TxAbort, TxBegin, TxEnd, TxTrace
from oracles import BruteLRU

G = CacheGeometry()
SMALL = CacheGeometry(line_size_bytes=64, l1_sets=4, l1_ways=2, llc_sets=8, llc_ways=4)


def same_l1_set(i, g=G):
    """Byte address of the i-th distinct line mapping to L1 set 0 and LLC set 0."""
    return i * g.llc_sets * g.line_size_bytes


class TestGeometry:
    def test_defaults(self):
        assert G.l1_lines * 64 == 32 * 1024
        assert G.llc_lines * 64 == 8 * 1024 * 1024
        assert G.lines_per_l1_set == 2048

    @pytest.mark.parametrize("kw", [
        {"line_size_bytes": 48}, {"line_size_bytes": 4}, {"l1_ways": 0},
        {"l1_sets": 64, "l1_ways": 8, "llc_sets": 64, "llc_ways": 8},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CacheGeometry(**kw)

    def test_config_file(self, tmp_path):
        p = tmp_path / "geo.cfg"
        p.write_text("# small\nl1_sets = 4\nl1_ways=2\nllc_sets=8\nllc_ways=4\n")
        assert CacheGeometry.from_file(p) == SMALL
        c = tmp_path / "cost.cfg"
        c.write_text("miss_cost = 50\n")
        assert CostModel.from_file(c).miss_cost == 50.0
        c.write_text("bogus = 1\n")
        with pytest.raises(ValueError):
            CostModel.from_file(c)
        c.write_text("no equals sign\n")
        with pytest.raises(ValueError):
            read_config(c)


class TestLineOf:
    def test_zero(self):
        assert line_of(0, G) == (0, 0, 0)

    def test_mod(self):
        assert line_of(130, G)[:2] == (128, 2)

    def test_wrap(self):
        assert line_of(4096, G)[1] == 0

    def test_negative(self):
        with pytest.raises(ValueError):
            line_of(-1, G)


class TestAccess:
    def test_repeat_hits_l1(self):
        sim = CacheSim()
        assert sim.read(1000).level_hit == "miss"
        assert sim.read(1000).level_hit == "l1"

    def test_l1_eviction_keeps_llc(self):
        sim = CacheSim()
        for i in range(9):
            sim.read(same_l1_set(i) + 0 * 64)
        out = sim.read(same_l1_set(0))
        assert out.level_hit == "llc"

    def test_inclusion(self):
        sim = CacheSim(SMALL)
        rng = np.random.default_rng(3)
        for a in rng.integers(0, 64, 500):
            sim.read(int(a) * 64)
            l1 = set(sim._l1_tag[sim._l1_tag >= 0].tolist())
            llc = set(sim._llc_tag[sim._llc_tag >= 0].tolist())
            assert l1 <= llc

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_bruteforce_10k(self, seed):
        rng = np.random.default_rng(seed)
        lines = rng.integers(0, 40_000, 10_000)
        sim, ref = CacheSim(), BruteLRU(G)
        for ln in lines:
            assert sim.read(int(ln) * 64).level_hit == ref.access(int(ln))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(9)
        lines = rng.integers(0, 200, 3000)
        a, b = CacheSim(SMALL), CacheSim(SMALL)
        levels, _ = a.access_lines(lines)
        singles = [b.read(int(x) * 64).level_hit for x in lines]
        assert [("l1", "llc", "miss")[v] for v in levels] == singles

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(0, 100), min_size=1, max_size=300))
    def test_lru_property_small(self, seq):
        sim, ref = CacheSim(SMALL), BruteLRU(SMALL)
        for ln in seq:
            assert sim.read(ln * 64).level_hit == ref.access(ln)


class TestTransactions:
    def test_nine_dirty_lines_abort(self):
        sim = CacheSim()
        tx = sim.tx_begin()
        outs = [sim.tx_access(tx, MemRef(same_l1_set(i), "write"))
                for i in range(8)]
        assert all(o.caused_abort is None for o in outs)
        out = sim.tx_access(tx, MemRef(same_l1_set(8), "write"))
        assert out.caused_abort is AbortCause.DIRTY_L1_EVICTION
        assert tx.status == "aborted"

    def test_nine_reads_no_abort(self):
        sim = CacheSim()
        for i in range(9):
            sim.read(same_l1_set(i))
        tx = sim.tx_begin()
        for i in range(9):
            out = sim.tx_access(tx, MemRef(same_l1_set(i)))
            assert out.caused_abort is None
            assert out.level_hit != "miss"
        stats = sim.tx_end(tx)
        assert stats.misses == 0 and stats.accesses == 9

    def test_seventeen_reads_abort(self):
        sim = CacheSim()
        tx = sim.tx_begin()
        for i in range(16):
            assert sim.tx_access(tx, MemRef(same_l1_set(i))).caused_abort is None
        out = sim.tx_access(tx, MemRef(same_l1_set(16)))
        assert out.caused_abort is AbortCause.READSET_EXCEEDS_LLC

    def test_no_access_after_abort(self):
        sim = CacheSim()
        tx = sim.tx_begin()
        for i in range(9):
            sim.tx_access(tx, MemRef(same_l1_set(i), "write"))
        with pytest.raises(TxError):
            sim.tx_access(tx, MemRef(0))
        with pytest.raises(TxError):
            sim.tx_end(tx)
        sim.tx_begin()  # re-begin is allowed

    def test_nested_begin(self):
        sim = CacheSim()
        sim.tx_begin()
        with pytest.raises(TxError):
            sim.tx_begin()
        with pytest.raises(TxError):
            sim.read(0)

    def test_sets_monotone_and_write_in_read(self):
        sim = CacheSim()
        tx = sim.tx_begin()
        rng = np.random.default_rng(0)
        last_r = last_w = 0
        for a in rng.integers(0, 300, 200):
            sim.tx_access(tx, MemRef(int(a) * 64, "write" if a % 3 == 0 else "read"))
            r, w = tx.read_set, tx.write_set
            assert len(r) >= last_r and len(w) >= last_w
            assert w <= r
            last_r, last_w = len(r), len(w)
        sim.tx_end(tx)
        assert tx.read_set == set()

    def test_commit_cleans(self):
        sim = CacheSim()
        tx = sim.tx_begin()
        for i in range(8):
            sim.tx_access(tx, MemRef(same_l1_set(i), "write"))
        sim.tx_end(tx)
        # lines are clean now, so a new transaction may push them out
        tx = sim.tx_begin()
        for i in range(8, 16):
            assert sim.tx_access(tx, MemRef(same_l1_set(i), "write")).caused_abort is None
        sim.tx_end(tx)

    def test_abort_point_deterministic(self):
        def run():
            sim = CacheSim()
            tx = sim.tx_begin()
            rng = np.random.default_rng(5)
            for k, a in enumerate(rng.integers(0, 5000, 5000)):
                if sim.tx_access(tx, MemRef(int(a) * 64, "write")).caused_abort:
                    return k
        assert run() == run() is not None

    def test_batch_stops_at_abort(self):
        sim = CacheSim()
        tx = sim.tx_begin()
        lines = np.arange(10) * G.llc_sets
        levels, idx = sim.access_lines(lines, True, tx)
        assert idx == 8 and tx.status == "aborted" and tx.instruction_count == 9


class TestFootprint:
    def test_agrees_with_lru_when_it_fits(self):
        rng = np.random.default_rng(1)
        lines = rng.integers(0, 4 * G.llc_sets, 20_000)
        lru, _ = CacheSim().access_lines(lines)
        fp, _ = FootprintSim().access_lines(lines)
        assert np.array_equal(lru == 2, fp == 2)

    def test_overflow(self):
        fp = FootprintSim(SMALL)
        with pytest.raises(FootprintOverflow):
            fp.access_lines(np.arange(5) * SMALL.llc_sets)

    def test_no_transactions(self):
        with pytest.raises(TxError):
            FootprintSim().access_lines(np.arange(3), tx=object())


class TestCost:
    def test_empty(self):
        assert cost_of(TxTrace()) == 0

    def test_single_tx(self):
        t = TxTrace([TxBegin(0), TxEnd(0, 10, 10, 0)])
        assert cost_of(t) == 210

    def test_abort_then_retry(self):
        t = TxTrace([TxBegin(0), TxAbort(0, "dirty_l1_eviction", 10, 10, 0),
                     TxBegin(1), TxEnd(1, 10, 10, 0)])
        assert cost_of(t) == 420

    def test_replay_factor(self):
        t = TxTrace([TxBegin(0), TxAbort(0, "x", 10, 10, 0)])
        assert cost_of(t, CostModel(abort_replay_factor=0.5)) == 105
