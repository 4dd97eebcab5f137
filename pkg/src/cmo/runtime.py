"""Leaky sections, typed containers and transaction partitioning.

A :class:`Machine` owns the simulated cache, an address allocator for
application arrays and the run's :class:`~cmo.trace.TxTrace`. Programs wrap
their arrays in the four container types and run their data-dependent part
inside a leaky section::

    m = Machine()
    data, out = NobRW(values), ObRW(np.empty(n))
    sec = begin_leaky(m, [data, out], Dynamic())
    ...                      # data.read_at(i), out.write_next(v)
    trace = end_leaky(sec)

Inside a section every container access is served from shadow memory within
a transaction. Under :class:`Dynamic` a boundary (commit, write back, reload,
preload twice, begin) is inserted just before an oblivious access that would
overflow the current partitions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .cache import AbortCause, CacheGeometry, CacheSim, FootprintSim, TxContext
from .shadow import DataClass, ShadowLayout, SizeSpec, plan_layout, shadow_lines
from .trace import Reload, TxAbort, TxBegin, TxEnd, TxTrace

APP_BASE_LINE = 1 << 26  # application arrays live above the shadow arena


class TransactionAborted(RuntimeError):
    def __init__(self, cause: AbortCause):
        super().__init__(f"transaction aborted: {cause.value}")
        self.cause = cause


class CannotComplete(RuntimeError):
    """Every retry aborted; the computation cannot run under this policy."""


class SectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Dynamic:
    retries: int = 1


@dataclass(frozen=True)
class Static:
    k: int = 8
    retries: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class Manual:
    retries: int = 8


PartitionPolicy = Dynamic | Static | Manual


class Machine:
    """Simulated memory system shared by every section of one run.

    ``engine="footprint"`` swaps in compulsory-miss accounting for runs that
    never open a transaction (see :class:`~cmo.cache.FootprintSim`).
    """

    def __init__(self, geometry: CacheGeometry | None = None, engine: str = "lru"):
        self.geometry = geometry or CacheGeometry()
        if engine == "lru":
            self.cache = CacheSim(self.geometry)
        elif engine == "footprint":
            self.cache = FootprintSim(self.geometry)
        else:
            raise ValueError(f"unknown engine {engine!r}")
        self.engine = engine
        self.trace = TxTrace()
        self.section = None
        self._next_line = APP_BASE_LINE
        self._bases: dict[int, tuple[int, np.ndarray]] = {}
        self._resident: set[tuple[int, int]] = set()

    @property
    def line_size(self) -> int:
        return self.geometry.line_size_bytes

    def base_line(self, container: "Container") -> int:
        """Application base line of the container's array, allocated on first use.

        Views share their root array's allocation, offset by their first row.
        """
        arr = container.data
        root = arr
        while isinstance(root.base, np.ndarray):
            root = root.base
        if root.ndim == 0 or root.shape[0] == 0 or root.strides[0] <= 0:
            root = arr
        key = id(root)
        hit = self._bases.get(key)
        if hit is None:
            rows = root.shape[0] if root.ndim else 1
            n_lines = -(-rows * container.width // self.line_size)
            hit = (self._next_line, root)
            self._next_line += max(n_lines, 1)
            self._bases[key] = hit
        if root is arr or arr.size == 0:
            return hit[0]
        offset = arr.__array_interface__["data"][0] - root.__array_interface__["data"][0]
        row = offset // root.strides[0]
        return hit[0] + row * container.width // self.line_size

    def touch1(self, line: int, write: bool = False) -> None:
        """Single plain access outside transactions."""
        cache = self.cache
        if self.engine == "footprint":
            if line in cache._seen:
                self.trace.plain_access(1)
                return
            self.plain(np.array([line], dtype=np.int64), write)
            return
        K.access_one(*cache.state, line, write, False, cache._out)
        if cache._out[0] == K.LEVEL_MISS:
            self.trace.plain_access(0, (line * self.line_size,))
        else:
            self.trace.plain_access(1)

    # accesses outside transactions

    def touch_lines(self, lines: np.ndarray, writes=False) -> tuple[int, list[int]]:
        """Access lines outside any transaction. Returns (hits, missed line addresses)."""
        if len(lines) == 0:
            return 0, []
        levels, _ = self.cache.access_lines(np.asarray(lines, dtype=np.int64), writes)
        miss = levels == K.LEVEL_MISS
        missed = (np.asarray(lines)[miss] * self.line_size).tolist()
        return int(len(lines) - miss.sum()), missed

    def plain(self, lines, writes=False) -> None:
        hits, missed = self.touch_lines(lines, writes)
        self.trace.plain_access(hits, missed)

    def sweep(self, container: "Container", writes=False) -> None:
        """Touch every line of a container, in order, outside transactions."""
        lines = container.app_lines()
        key = (lines[0] if len(lines) else 0, len(lines))
        if self.engine == "footprint" and key in self._resident:
            self.trace.plain_access(len(lines))
            return
        self.plain(lines, writes)
        if self.engine == "footprint":
            self._resident.add(key)

    def repeat(self, lines: np.ndarray, writes, times: int) -> None:
        """Run the same access pattern ``times`` times outside transactions."""
        if times <= 0 or len(lines) == 0:
            return
        self.plain(lines, writes)
        if self.engine == "footprint":
            # every line is resident now, so the remaining rounds are all hits
            self.trace.plain_access(len(lines) * (times - 1))
            return
        for _ in range(times - 1):
            self.plain(lines, writes)

    def cost(self, model=None) -> float:
        from .cache import cost_of
        return cost_of(self.trace, model)


class Container:
    """Typed view over an application array; one element per row of ``data``."""

    cls: DataClass
    oblivious = False
    writable = False

    def __init__(self, data, width: int | None = None):
        self.data = np.asarray(data)
        if self.data.ndim == 0:
            raise ValueError("container data must be an array")
        self.width = width
        self.section = None
        self.cursor = 0
        self._machine = None
        self.order = None

    def __len__(self) -> int:
        return len(self.data)

    def _bind(self, machine: Machine):
        ls = machine.line_size
        w = self.width or ls
        if not (ls % w == 0 or w % ls == 0):
            raise ValueError("element width must divide the line size or be a multiple of it")
        if self.order is not None and w != ls:
            raise ValueError("ordered containers need one element per line")
        self.width = w
        self._ls = ls
        self._machine = machine
        self._base = machine.base_line(self)

    @property
    def n_lines(self) -> int:
        w = self.width or 64
        ls = getattr(self, "_ls", 64)
        return -(-len(self.data) * w // ls)

    def elem_lines(self, i: int) -> range:
        """Container-relative line indices covered by element ``i``."""
        w, ls = self.width, self._ls
        return range(i * w // ls, ((i + 1) * w - 1) // ls + 1)

    def app_lines(self) -> np.ndarray:
        return self._app(0, self.n_lines)

    def _app(self, lo: int, hi: int) -> np.ndarray:
        """Application lines of logical lines [lo, hi)."""
        if self.order is not None:
            return self._base + self.order[lo:hi]
        return self._base + np.arange(lo, hi, dtype=np.int64)

    def _phys(self, i: int) -> int:
        return i if self.order is None else int(self.order[i])

    def _check(self):
        if self.section is None:
            raise SectionError(f"{type(self).__name__} used outside a leaky section")


class _Ob(Container):
    """Sequential container. ``order`` (a public permutation of the rows) makes
    the cursor visit ``data[order[0]], data[order[1]], ...``."""

    oblivious = True

    def __init__(self, data, width: int | None = None, order=None):
        super().__init__(data, width)
        if order is not None:
            order = np.asarray(order, dtype=np.int64)
            if sorted(order.tolist()) != list(range(len(self.data))):
                raise ValueError("order must be a permutation of the rows")
            self.order = order

    def reset(self) -> None:
        self._check()
        self.section.ob_reset(self)

    def _advance(self):
        if self.cursor >= len(self.data):
            raise IndexError(f"{type(self).__name__} cursor past end ({len(self.data)})")


class ObRO(_Ob):
    cls = DataClass.A3

    def read_next(self):
        self._check()
        self._advance()
        return self.section.ob_access(self, None)


class ObRW(_Ob):
    cls = DataClass.A4
    writable = True

    def write_next(self, value) -> None:
        self._check()
        self._advance()
        self.section.ob_access(self, value)


class NobRO(Container):
    cls = DataClass.A1

    def read_at(self, index: int):
        self._check()
        if not 0 <= index < len(self.data):
            raise IndexError(index)
        return self.section.nob_access(self, index, False, None)

    nob_read_at = read_at


class NobRW(Container):
    cls = DataClass.A2
    writable = True

    def read_at(self, index: int):
        self._check()
        if not 0 <= index < len(self.data):
            raise IndexError(index)
        return self.section.nob_access(self, index, False, None)

    def write_at(self, index: int, value) -> None:
        self._check()
        if not 0 <= index < len(self.data):
            raise IndexError(index)
        self.section.nob_access(self, index, True, value)


def size_spec(containers: Iterable[Container]) -> SizeSpec:
    totals = {c: 0 for c in DataClass}
    for c in containers:
        totals[c.cls] += c.n_lines
    return SizeSpec(totals[DataClass.A1], totals[DataClass.A2],
                    totals[DataClass.A3], totals[DataClass.A4])


class _Section:
    def __init__(self, machine: Machine, containers: Sequence[Container]):
        if machine.section is not None:
            raise SectionError("a leaky section is already active")
        self.machine = machine
        self.containers = list(containers)
        if len({id(c) for c in self.containers}) != len(self.containers):
            raise SectionError("container registered twice")
        for c in self.containers:
            if c.section is not None:
                raise SectionError("container already registered in another section")
            c._bind(machine)
        self.trace = machine.trace
        self.active = True
        machine.section = self
        for c in self.containers:
            c.section = self
            c.cursor = 0

    def _close(self):
        for c in self.containers:
            c.section = None
        self.machine.section = None
        self.active = False

    def ob_reset(self, c):
        c.cursor = 0

    def abandon(self):
        """Drop the section after an abort without touching memory."""
        self._close()


class PlainSection(_Section):
    """Runs the program body without transactions.

    With ``scan=True`` every leaky access becomes a full sequential pass over
    its array (the scan baseline); otherwise accesses go straight to memory.
    """

    def __init__(self, machine, containers, scan: bool = False):
        super().__init__(machine, containers)
        self.scan = scan

    def ob_access(self, c, value):
        i = c._phys(c.cursor)
        for j in c.elem_lines(i):
            self.machine.touch1(c._base + j, c.writable)
        c.cursor += 1
        if c.writable:
            c.data[i] = value
            return None
        return c.data[i]

    def nob_access(self, c, i, write, value):
        if self.scan:
            self.machine.sweep(c, write)
        else:
            for j in c.elem_lines(i):
                self.machine.touch1(c._base + j, write)
        if write:
            c.data[i] = value
            return None
        return c.data[i]

    def end(self) -> TxTrace:
        self._close()
        return self.trace


class LeakySection(_Section):
    """Transactional execution of a leaky section under a partitioning policy."""

    def __init__(self, machine: Machine, containers: Sequence[Container],
                 policy: PartitionPolicy, layout: ShadowLayout | None = None):
        if not isinstance(machine.cache, CacheSim):
            raise SectionError("leaky sections need the LRU engine")
        super().__init__(machine, containers)
        self.policy = policy
        self.sizes = size_spec(self.containers)
        self.cache: CacheSim = machine.cache
        self.partition = 0
        self.tx: TxContext | None = None
        self._tx_accesses = 0
        self._static_k = policy.k if isinstance(policy, Static) else None
        self._pl: list[int] = []  # in-tx accesses not yet run through the cache
        self._pw: list[bool] = []
        try:
            if isinstance(policy, Manual):
                self.layout = None
                self._open_manual()
            else:
                self.layout = layout or plan_layout(self.sizes, machine.geometry)
                self._open_partitioned()
        except BaseException:
            self._close()
            raise

    # setup

    def _open_manual(self):
        for c in self.containers:
            c._lines = c.app_lines()
            c._tab = c._lines.tolist()
        ws = np.sort(np.concatenate([c._lines for c in self.containers] or [np.zeros(0, int)]))
        self._preload(ws)
        self._begin()

    def _open_partitioned(self):
        lay = self.layout
        offsets = {cls: 0 for cls in DataClass}
        ro = [c for c in self.containers if c.cls is DataClass.A3 and len(c)]
        rw = [c for c in self.containers if c.cls is DataClass.A4 and len(c)]
        # one window size for every Ob container: a boundary reloads all
        # windows, so a large window next to a small one would be re-copied
        # mostly unused
        win = []
        if ro:
            win.append(lay.p3_lines // len(ro))
        if rw:
            win.append(lay.p4_lines // len(rw))
        for c in ro + rw:
            c._wl = min(win)
        for c in self.containers:
            if c.oblivious:
                need = max(len(c.elem_lines(0)), 1) if len(c) else 0
                if not len(c):
                    c._wl = 0
                n = min(c._wl, c.n_lines)
                if n < need:
                    from .shadow import InfeasibleError
                    raise InfeasibleError("C1b", "partition smaller than one element")
            else:
                n = c.n_lines
            c._tab = shadow_lines(lay, c.cls, offsets[c.cls], n)
            c._shadow = np.array(c._tab, dtype=np.int64)
            offsets[c.cls] += n
            c._win0 = 0
        for cls in (DataClass.A1, DataClass.A2):
            nob = [c for c in self.containers if c.cls is cls]
            if nob:
                self._copy_in(nob, "load", cls)
        self._load_windows("load")
        self._preload(self._working_set())
        self._begin()

    # lines

    def _window(self, c) -> tuple[int, int]:
        lo = c._win0
        return lo, min(lo + c._wl, c.n_lines)

    def _working_set(self) -> np.ndarray:
        parts = []
        for c in self.containers:
            if c.oblivious:
                lo, hi = self._window(c)
                parts.append(c._shadow[:hi - lo])
            else:
                parts.append(c._shadow)
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(parts))

    def _phase(self, kind: str, cls: str, src: np.ndarray, dst: np.ndarray | None, write_dst: bool):
        """Copy-style phase: interleave reads of ``src`` with writes of ``dst``."""
        if dst is None:
            seq, wr = src, False
        else:
            seq = np.empty(2 * len(src), dtype=np.int64)
            seq[0::2], seq[1::2] = src, dst
            wr = np.zeros(len(seq), dtype=bool)
            wr[1::2] = write_dst
        hits, missed = self.machine.touch_lines(seq, wr)
        self.trace.append(Reload(kind, cls, self.partition, hits, tuple(missed)))

    def _copy_in(self, conts, kind, cls):
        src = np.concatenate([c.app_lines() for c in conts])
        dst = np.concatenate([c._shadow for c in conts])
        self._phase(kind, cls.value, src, dst, True)

    def _load_windows(self, kind):
        ro = [c for c in self.containers if c.cls is DataClass.A3]
        if ro:
            src, dst = [], []
            for c in ro:
                lo, hi = self._window(c)
                src.append(c._app(lo, hi))
                dst.append(c._shadow[:hi - lo])
            self._phase(kind, "A3", np.concatenate(src), np.concatenate(dst), True)
        for c in self.containers:
            if c.oblivious:
                lo = c._win0
                c._budget_end = self._elems_before_line(c, lo + c._wl)

    def _elems_before_line(self, c, line) -> int:
        return min(len(c), line * self.machine.line_size // c.width)

    def _writeback_windows(self):
        rw = [c for c in self.containers if c.cls is DataClass.A4]
        src, dst = [], []
        for c in rw:
            lo = c._win0
            if c.cursor == 0:
                continue
            hi = min(c.elem_lines(c.cursor - 1).stop, c.n_lines)
            if hi > lo:
                src.append(c._shadow[:hi - lo])
                dst.append(c._app(lo, hi))
        if src:
            self._phase("writeback", "A4", np.concatenate(src), np.concatenate(dst), True)

    def double_preload(self) -> None:
        self._preload(self._working_set())

    def _preload(self, ws: np.ndarray):
        if len(ws) == 0:
            return
        hits, missed = self.machine.touch_lines(np.concatenate([ws, ws]))
        self.trace.append(Reload("preload", "*", self.partition, hits, tuple(missed)))

    # transactions

    def _begin(self):
        self.tx = self.cache.tx_begin()
        self._tx_accesses = 0
        self.trace.append(TxBegin(self.tx.tx_id))

    def _commit(self):
        self._flush()
        stats = self.cache.tx_end(self.tx)
        self.trace.append(TxEnd(stats.tx_id, stats.accesses, stats.hits, stats.misses))

    def boundary(self):
        self._commit()
        ws = self._working_set()
        if len(ws):
            # re-touch in address order so recency no longer reflects in-tx accesses
            hits, missed = self.machine.touch_lines(ws)
            self.trace.append(Reload("settle", "*", self.partition, hits, tuple(missed)))
        self._writeback_windows()
        self.partition += 1
        for c in self.containers:
            if c.oblivious:
                c._win0 = c.elem_lines(c.cursor)[0] if c.cursor < len(c) else c.n_lines
        self._load_windows("reload")
        self.double_preload()
        self._begin()

    def _flush(self):
        # In-tx accesses are batched; an abort surfaces at the next flush with
        # the exact aborting access recorded. Nothing observable happens in between.
        if not self._pl:
            return
        lines = np.array(self._pl, dtype=np.int64)
        writes = np.array(self._pw, dtype=np.bool_)
        self._pl.clear()
        self._pw.clear()
        tx = self.tx
        _, idx = self.cache.access_lines(lines, writes, tx)
        if idx >= 0:
            self.trace.append(TxAbort(tx.tx_id, tx.cause.value, tx.instruction_count,
                                      tx.hits, tx.misses))
            raise TransactionAborted(tx.cause)

    def abandon(self):
        self._pl.clear()
        self._pw.clear()
        tx = self.tx
        if tx is not None and tx.active:
            self.cache._abort(tx, AbortCause.EXPLICIT)
            self.trace.append(TxAbort(tx.tx_id, AbortCause.EXPLICIT.value,
                                      tx.instruction_count, tx.hits, tx.misses))
        self._close()

    def _pre_access(self, c=None):
        """Insert a boundary if the next access would leave a window (or Static's k)."""
        if not self.active:
            raise SectionError("section is closed")
        if self.tx is None or self.tx.status != "active":
            raise SectionError("transaction aborted; section must be restarted")
        if self.layout is None:
            return
        k = self._static_k
        if k is not None and self._tx_accesses >= k or c is not None and c.cursor >= c._budget_end:
            self.boundary()

    def _lines_of(self, c, i: int, offset: int):
        if c.width > c._ls:
            return [c._tab[j - offset] for j in c.elem_lines(i)]
        return (c._tab[i * c.width // c._ls - offset],)

    def ob_access(self, c, value):
        self._pre_access(c)
        i = c.cursor
        off = 0 if self.layout is None else c._win0
        w = c.writable
        for ln in self._lines_of(c, i, off):
            self._pl.append(ln)
            self._pw.append(w)
        if len(self._pl) >= 8192:
            self._flush()
        self._tx_accesses += 1
        c.cursor = i + 1
        if c.order is not None:
            i = int(c.order[i])
        if w:
            c.data[i] = value
            return None
        return c.data[i]

    def nob_access(self, c, i, write, value):
        self._pre_access()
        for ln in self._lines_of(c, i, 0):
            self._pl.append(ln)
            self._pw.append(write)
        if len(self._pl) >= 8192:
            self._flush()
        self._tx_accesses += 1
        if write:
            c.data[i] = value
            return None
        return c.data[i]

    def ob_reset(self, c):
        if self.layout is not None:
            raise SectionError("reset inside a partitioned section would revisit old partitions")
        c.cursor = 0

    def end(self) -> TxTrace:
        if not self.active:
            raise SectionError("section is closed")
        self._commit()
        if self.layout is not None:
            ws = self._working_set()
            if len(ws):
                hits, missed = self.machine.touch_lines(ws)
                self.trace.append(Reload("settle", "*", self.partition, hits, tuple(missed)))
            self._writeback_windows()
            nob = [c for c in self.containers if c.cls is DataClass.A2]
            if nob:
                src = np.concatenate([c._shadow for c in nob])
                dst = np.concatenate([c.app_lines() for c in nob])
                self._phase("writeback", "A2", src, dst, True)
        self._close()
        return self.trace


def begin_leaky(machine: Machine, containers: Sequence[Container],
                policy: PartitionPolicy | None = None,
                layout: ShadowLayout | None = None) -> LeakySection:
    return LeakySection(machine, containers, policy or Dynamic(), layout)


def end_leaky(section: _Section) -> TxTrace:
    return section.end()


MODES = ("cmo_dynamic", "cmo_static", "manual", "scan_baseline", "plain_unprotected")


def parse_mode(mode: str):
    """Map a mode name to a section factory argument.

    ``cmo_static`` accepts an optional ``:k`` suffix (``cmo_static:16``).
    """
    name, _, arg = mode.partition(":")
    if name == "cmo_dynamic":
        return Dynamic()
    if name == "cmo_static":
        return Static(int(arg) if arg else 8)
    if name == "manual":
        return Manual()
    if name in ("scan_baseline", "plain_unprotected", "word_oblivious"):
        return name
    raise ValueError(f"unknown mode {mode!r}")


class Runtime:
    """A machine plus an execution mode; runs program bodies as sections."""

    def __init__(self, mode: str = "cmo_dynamic", geometry: CacheGeometry | None = None,
                 engine: str | None = None):
        self.mode = mode
        self.policy = parse_mode(mode)
        transactional = not isinstance(self.policy, str)
        if engine is None:
            engine = "lru"
        if transactional and engine != "lru":
            raise ValueError("transactional modes need the LRU engine")
        self.machine = Machine(geometry, engine)

    @property
    def trace(self) -> TxTrace:
        return self.machine.trace

    @property
    def transactional(self) -> bool:
        return not isinstance(self.policy, str)

    def run(self, body: Callable[[], object], containers: Sequence[Container], *,
            layout: ShadowLayout | None = None):
        """Execute ``body`` as one leaky section, restarting it after an abort.

        Writable containers are restored before each retry. Raises
        :class:`CannotComplete` once the policy's retry budget is spent.
        """
        if not self.transactional:
            sec = PlainSection(self.machine, containers, scan=self.policy == "scan_baseline")
            try:
                return body()
            finally:
                sec.end()
        saved = [(c, c.data.copy()) for c in containers if c.writable]
        for _ in range(self.policy.retries + 1):
            sec = begin_leaky(self.machine, containers, self.policy, layout)
            try:
                result = body()
                end_leaky(sec)
            except TransactionAborted:
                sec.abandon()
                for c, snap in saved:
                    c.data[...] = snap
                continue
            except BaseException:
                if sec.active:
                    sec.abandon()
                raise
            return result
        raise CannotComplete(f"aborted {self.policy.retries + 1} times under {self.mode}")

    def touch(self, container: Container, index: int, write: bool = False) -> None:
        """Access one element outside any section (public, data-independent code)."""
        if container._machine is not self.machine:
            container._bind(self.machine)
        for j in container.elem_lines(index):
            self.machine.touch1(container._base + j, write)

    def touch_all(self, container: Container, write: bool = False) -> None:
        if container._machine is not self.machine:
            container._bind(self.machine)
        self.machine.sweep(container, write)
