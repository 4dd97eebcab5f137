from math import ceil

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmo.cache import CacheGeometry, line_of
from cmo.shadow import (
    DataClass, InfeasibleError, SizeSpec, partition_count, plan_layout, satisfies_constraints,
    shadow_address, shadow_lines,
)
from oracles import brute_force_layout

G = CacheGeometry()
SMALL_LEAKY = SizeSpec(a1_lines=8, a2_lines=64, a3_lines=16, a4_lines=16)


def random_sizes(rng):
    return SizeSpec(
        a1_lines=int(rng.choice([0, rng.integers(1, 8192)])),
        a2_lines=int(rng.choice([0, rng.integers(1, 480)])),
        a3_lines=int(rng.choice([0, rng.integers(1, 200_000)])),
        a4_lines=int(rng.choice([0, rng.integers(1, 200_000)])),
    )


def test_data_classes():
    assert {c for c in DataClass if c.leaky} == {DataClass.A1, DataClass.A2}
    assert {c for c in DataClass if c.read_write} == {DataClass.A2, DataClass.A4}


def test_default_allocation_60_2_1_1():
    lay = plan_layout(SMALL_LEAKY, G)
    r = lay.l1_set_ranges
    assert len(r[DataClass.A2]) == 60
    assert len(r[DataClass.A4]) == 2
    assert len(r[DataClass.A3]) == 1
    assert len(r[DataClass.A1]) == 1
    assert r[DataClass.A1] == range(63, 64)


def test_a2_too_large():
    with pytest.raises(InfeasibleError) as e:
        plan_layout(SizeSpec(a2_lines=G.l1_lines + 1), G)
    assert e.value.constraint == "C1b"


def test_a1_too_large():
    with pytest.raises(InfeasibleError) as e:
        plan_layout(SizeSpec(a1_lines=G.llc_lines, a4_lines=10), G)
    assert e.value.constraint == "C1a"


def test_large_instance_against_bruteforce():
    sizes = SizeSpec(64, 256, 65536, 65536)
    lay = plan_layout(sizes, G)
    best, total = brute_force_layout(sizes, G)
    assert min(lay.p3_lines, lay.p4_lines) == best
    assert lay.p3_lines + lay.p4_lines == total


@pytest.mark.parametrize("seed", range(10))
def test_optimal_random(seed):
    rng = np.random.default_rng(seed)
    for _ in range(3):
        sizes = random_sizes(rng)
        ref = brute_force_layout(sizes, G)
        if ref is None:
            with pytest.raises(InfeasibleError):
                plan_layout(sizes, G)
            continue
        lay = plan_layout(sizes, G)
        got = min(lay.p3_lines, lay.p4_lines) if sizes.a3_lines and sizes.a4_lines else \
            (lay.p3_lines if sizes.a3_lines else lay.p4_lines if sizes.a4_lines else 0)
        assert (got, lay.p3_lines + lay.p4_lines) == ref


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 500), st.integers(0, 10**6), st.integers(0, 10**6))
def test_layout_invariants(a1, a2, a3, a4):
    sizes = SizeSpec(a1, a2, a3, a4)
    try:
        lay = plan_layout(sizes, G)
    except InfeasibleError:
        return
    r = lay.l1_set_ranges
    used = [s for rng_ in r.values() for s in rng_]
    assert len(used) == len(set(used)) and sum(lay.set_counts) <= G.l1_sets
    assert lay.capacity(DataClass.A1) >= a1 and lay.capacity(DataClass.A2) >= a2
    assert lay.p3_lines <= lay.capacity(DataClass.A3)
    assert lay.p4_lines <= lay.capacity(DataClass.A4)
    L = lay.L
    assert ceil(a1 / L) + ceil(lay.p3_lines / L) + a2 + lay.p4_lines < G.l1_lines
    assert a1 + lay.p3_lines + a2 + lay.p4_lines < G.llc_lines
    assert satisfies_constraints(a1, a2, lay.p3_lines, lay.p4_lines, G)
    # coverage of the partitioned arrays
    for total, part, cls in ((a3, lay.p3_lines, DataClass.A3), (a4, lay.p4_lines, DataClass.A4)):
        n = partition_count(lay, cls)
        if total == 0:
            assert n == 0
        else:
            assert n * part >= total > (n - 1) * part


class TestShadowAddress:
    def test_a1_set_63(self):
        lay = plan_layout(SMALL_LEAKY, G)
        assert line_of(shadow_address(lay, DataClass.A1, 0), G)[1] == 63

    def test_single_set_range(self):
        lay = plan_layout(SizeSpec(a2_lines=8, a3_lines=10**6, a4_lines=10**6), G)
        assert len(lay.l1_set_ranges[DataClass.A2]) == 1
        addrs = [shadow_address(lay, DataClass.A2, i) for i in range(8)]
        assert len({line_of(a, G)[1] for a in addrs}) == 1
        assert len({line_of(a, G)[0] for a in addrs}) == 8

    def test_round_robin(self):
        lay = plan_layout(SMALL_LEAKY, G)
        sets = [line_of(shadow_address(lay, DataClass.A2, i), G)[1] for i in range(120)]
        assert sets[:60] == list(range(60)) and sets[60:] == list(range(60))

    def test_out_of_range(self):
        lay = plan_layout(SMALL_LEAKY, G)
        with pytest.raises(IndexError):
            shadow_address(lay, DataClass.A4, lay.capacity(DataClass.A4))

    def test_no_cross_class_collisions(self):
        lay = plan_layout(SizeSpec(100, 300, 5000, 5000), G)
        owner = {}
        for cls in DataClass:
            for i in range(lay.capacity(cls)):
                s = line_of(shadow_address(lay, cls, i), G)[1]
                assert owner.setdefault(s, cls) is cls

    def test_lines_helper_matches(self):
        lay = plan_layout(SizeSpec(100, 300, 5000, 5000), G)
        for cls in DataClass:
            n = min(50, lay.capacity(cls))
            assert shadow_lines(lay, cls, 0, n) == [shadow_address(lay, cls, i) // 64
                                                   for i in range(n)]


def test_partition_count_examples():
    lay = plan_layout(SizeSpec(a3_lines=0, a4_lines=5), G)
    assert partition_count(lay, DataClass.A3) == 0
    lay = plan_layout(SizeSpec(a2_lines=(G.l1_sets - 2) * 8, a3_lines=100, a4_lines=100), G)
    assert lay.p4_lines == 8
    assert partition_count(lay, DataClass.A4) == 13
    with pytest.raises(ValueError):
        partition_count(lay, DataClass.A1)


def test_report_mentions_all_classes():
    text = plan_layout(SMALL_LEAKY, G).report()
    for name in ("A1", "A2", "A3", "A4", "P3", "P4"):
        assert name in text
