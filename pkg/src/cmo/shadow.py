"""Shadow-memory layout: which L1 sets each data class may occupy.

The four classes get disjoint, contiguous ranges of whole L1 sets, ordered
A2, P4, P3, A1 from set 0 upward. Read-only classes (A1, P3) may use every
LLC line behind their sets because clean lines can be replaced in L1 without
aborting; read-write classes (A2, P4) are held to the L1 ways of their sets.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from math import ceil

from .cache import CacheGeometry


class InfeasibleError(ValueError):
    """The leaky working set cannot be kept cache-resident."""

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


class DataClass(enum.Enum):
    A1 = "A1"  # leaky read-only (NobRO)
    A2 = "A2"  # leaky read-write (NobRW)
    A3 = "A3"  # non-leaky read-only (ObRO), partitioned into P3
    A4 = "A4"  # non-leaky read-write (ObRW), partitioned into P4

    @property
    def leaky(self) -> bool:
        return self in (DataClass.A1, DataClass.A2)

    @property
    def read_write(self) -> bool:
        return self in (DataClass.A2, DataClass.A4)


@dataclass(frozen=True)
class SizeSpec:
    a1_lines: int = 0
    a2_lines: int = 0
    a3_lines: int = 0
    a4_lines: int = 0

    def __post_init__(self):
        for v in (self.a1_lines, self.a2_lines, self.a3_lines, self.a4_lines):
            if v < 0:
                raise ValueError("sizes must be >= 0")


_ORDER = (DataClass.A2, DataClass.A4, DataClass.A3, DataClass.A1)


@dataclass(frozen=True)
class ShadowLayout:
    sizes: SizeSpec
    geometry: CacheGeometry
    set_counts: tuple[int, int, int, int]  # A1, A2, A3, A4
    p3_lines: int
    p4_lines: int

    @property
    def L(self) -> int:
        return self.geometry.lines_per_l1_set

    @property
    def l1_set_ranges(self) -> dict[DataClass, range]:
        counts = dict(zip(DataClass, self.set_counts))
        out, start = {}, 0
        for cls in _ORDER:
            out[cls] = range(start, start + counts[cls])
            start += counts[cls]
        return out

    def capacity(self, cls: DataClass) -> int:
        """Lines the class's set range can hold inside one transaction."""
        n = len(self.l1_set_ranges[cls])
        return n * (self.geometry.l1_ways if cls.read_write else self.L)

    def report(self) -> str:
        ranges = self.l1_set_ranges
        lines = ["class  sets        lines"]
        for cls in DataClass:
            r = ranges[cls]
            span = f"{r.start}-{r.stop - 1}" if len(r) else "-"
            lines.append(f"{cls.value:<6} {span:<11} {self.capacity(cls)}")
        lines.append(f"P3 = {self.p3_lines} lines, {partition_count(self, DataClass.A3)} partitions")
        lines.append(f"P4 = {self.p4_lines} lines, {partition_count(self, DataClass.A4)} partitions")
        lines.append(f"L = {self.L}")
        return "\n".join(lines)


def satisfies_constraints(a1: int, a2: int, p3: int, p4: int, geometry: CacheGeometry) -> bool:
    L = geometry.lines_per_l1_set
    return (a1 + p3 + a2 + p4 < geometry.llc_lines
            and ceil(a1 / L) + ceil(p3 / L) + a2 + p4 < geometry.l1_lines)


def _objective(p3: int, p4: int, a3: int, a4: int) -> int:
    if a3 and a4:
        return min(p3, p4)
    return p3 if a3 else (p4 if a4 else 0)


def plan_layout(sizes: SizeSpec, geometry: CacheGeometry | None = None) -> ShadowLayout:
    """Assign L1 set ranges so that min(P3, P4) is as large as possible.

    Leaky classes get the fewest sets that hold them whole. Every split of the
    remaining sets between P3 and P4 is tried; ties prefer a larger P3 + P4,
    then fewer sets spent on partitions. Unused sets go to A2.
    """
    return _plan(sizes, geometry or CacheGeometry())


@functools.lru_cache(maxsize=4096)
def _plan(sizes: SizeSpec, g: CacheGeometry) -> ShadowLayout:
    S, W, L = g.l1_sets, g.l1_ways, g.lines_per_l1_set
    a1, a2, a3, a4 = sizes.a1_lines, sizes.a2_lines, sizes.a3_lines, sizes.a4_lines
    need3, need4 = int(a3 > 0), int(a4 > 0)
    s1, s2 = ceil(a1 / L), ceil(a2 / W)

    if s2 > S - need3 - need4 - int(a1 > 0):
        raise InfeasibleError("C1b", f"A2 needs {a2} lines, L1 allows at most "
                              f"{(S - need3 - need4 - int(a1 > 0)) * W}")
    if s1 + s2 + need3 + need4 > S:
        raise InfeasibleError("C1a", f"A1 needs {a1} lines, LLC allotment is "
                              f"{(S - s2 - need3 - need4) * L}")

    rem = S - s1 - s2
    best = None
    for s3 in range(need3, rem + 1 if need3 else 1):
        for s4 in range(need4, rem - s3 + 1 if need4 else 1):
            p3, p4 = min(s3 * L, a3), min(s4 * W, a4)
            if not satisfies_constraints(a1, a2, p3, p4, g):
                continue
            key = (_objective(p3, p4, a3, a4), p3 + p4, -(s3 + s4))
            if best is None or key > best[0]:
                best = (key, s3, s4, p3, p4)
    if best is None:
        raise InfeasibleError("C1a", "no set assignment keeps the working set below LLC/L1 bounds")
    _, s3, s4, p3, p4 = best
    s2 = S - s1 - s3 - s4
    return ShadowLayout(sizes, g, (s1, s2, s3, s4), p3, p4)


def shadow_address(layout: ShadowLayout, cls: DataClass, logical_index: int,
                   base: int = 0) -> int:
    """Byte address of a class's ``logical_index``-th shadow line.

    Consecutive indices walk round-robin over the class's sets, then move on
    to the next way. ``base`` must be aligned to the LLC size.
    """
    r = layout.l1_set_ranges[cls]
    if not 0 <= logical_index < layout.capacity(cls):
        raise IndexError(f"{cls.value} index {logical_index} outside capacity "
                         f"{layout.capacity(cls)}")
    g = layout.geometry
    line = (logical_index // len(r)) * g.l1_sets + r.start + logical_index % len(r)
    return base + line * g.line_size_bytes


def shadow_lines(layout: ShadowLayout, cls: DataClass, start: int, count: int) -> "list[int]":
    """Line numbers (address // line size) of ``count`` consecutive logical indices."""
    r = layout.l1_set_ranges[cls]
    if count and (start < 0 or start + count > layout.capacity(cls)):
        raise IndexError(f"{cls.value} range outside capacity")
    n, s0, S = len(r), r.start, layout.geometry.l1_sets
    return [(i // n) * S + s0 + i % n for i in range(start, start + count)]


def partition_count(layout: ShadowLayout, cls: DataClass) -> int:
    if cls is DataClass.A3:
        total, part = layout.sizes.a3_lines, layout.p3_lines
    elif cls is DataClass.A4:
        total, part = layout.sizes.a4_lines, layout.p4_lines
    else:
        raise ValueError("only A3 and A4 are partitioned")
    return 0 if total == 0 else ceil(total / part)
