"""Two-level set-associative cache with TSX-style transactional tracking.

Both levels use per-set LRU and see every access. The LLC is inclusive: an
LLC eviction back-invalidates the L1 copy. Inside a transaction every touched
line joins the read-set (tracked in the LLC) and written lines also join the
write-set (tracked in L1). A transaction aborts when

* a write-set line leaves L1 (``DIRTY_L1_EVICTION``), or
* a tracked line is forced out of its LLC set (``READSET_EXCEEDS_LLC``).

Clean lines may be replaced in L1 freely while they stay in the LLC.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels as K
from .trace import InterTxMiss, PlainHits, Reload, TxAbort, TxEnd, TxTrace


class TxError(RuntimeError):
    """Misuse of the transaction interface (nesting, access after abort, ...)."""


class AbortCause(enum.Enum):
    DIRTY_L1_EVICTION = "dirty_l1_eviction"
    READSET_EXCEEDS_LLC = "readset_exceeds_llc"
    EXPLICIT = "explicit"  # the program gave up on the transaction


_CAUSES = {K.ABORT_DIRTY: AbortCause.DIRTY_L1_EVICTION,
           K.ABORT_READSET: AbortCause.READSET_EXCEEDS_LLC}
LEVELS = ("l1", "llc", "miss")


def _is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file. ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _from_config(cls, path):
    raw = read_config(path)
    known = {f.name: f.type for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ValueError(f"unknown keys in {path}: {sorted(unknown)}")
    kwargs = {}
    for k, v in raw.items():
        kwargs[k] = float(v) if known[k] in (float, "float") else int(v)
    return cls(**kwargs)


@dataclass(frozen=True)
class CacheGeometry:
    line_size_bytes: int = 64
    l1_sets: int = 64
    l1_ways: int = 8
    llc_sets: int = 8192
    llc_ways: int = 16

    def __post_init__(self):
        if not _is_pow2(self.line_size_bytes) or self.line_size_bytes < 8:
            raise ValueError("line_size_bytes must be a power of two >= 8")
        for name in ("l1_sets", "l1_ways", "llc_sets", "llc_ways"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.llc_sets % self.l1_sets:
            raise ValueError("llc_sets must be a multiple of l1_sets")
        if self.l1_lines >= self.llc_lines:
            raise ValueError("L1 capacity must be smaller than LLC capacity")

    @property
    def l1_lines(self) -> int:
        return self.l1_sets * self.l1_ways

    @property
    def llc_lines(self) -> int:
        return self.llc_sets * self.llc_ways

    @property
    def lines_per_l1_set(self) -> int:
        """Maximal number of LLC lines that map onto one L1 set."""
        return self.llc_lines // self.l1_sets

    @classmethod
    def from_file(cls, path) -> "CacheGeometry":
        return _from_config(cls, path)


def line_of(address: int, geometry: CacheGeometry) -> tuple[int, int, int]:
    """Return (line address, L1 set index, LLC set index) for a byte address."""
    if address < 0:
        raise ValueError("address must be >= 0")
    size = geometry.line_size_bytes
    line_addr = address - address % size
    n = line_addr // size
    return line_addr, n % geometry.l1_sets, n % geometry.llc_sets


@dataclass(frozen=True)
class MemRef:
    address: int
    kind: str = "read"

    def __post_init__(self):
        if self.address < 0:
            raise ValueError("address must be >= 0")
        if self.kind not in ("read", "write"):
            raise ValueError("kind must be 'read' or 'write'")


@dataclass(frozen=True)
class AccessOutcome:
    level_hit: str
    evicted_line: Optional[int] = None
    caused_abort: Optional[AbortCause] = None


@dataclass
class TxContext:
    tx_id: int
    status: str = "active"
    cause: Optional[AbortCause] = None
    instruction_count: int = 0
    hits: int = 0
    misses: int = 0
    _sim: "CacheSim" = field(default=None, repr=False)

    @property
    def active(self) -> bool:
        return self.status == "active"

    @property
    def read_set(self) -> set[int]:
        """Tracked line addresses (write-set lines are counted here once)."""
        if not self.active:
            return set()
        return self._sim._tracked_lines()

    @property
    def write_set(self) -> set[int]:
        if not self.active:
            return set()
        return self._sim._written_lines()


@dataclass(frozen=True)
class TxStats:
    tx_id: int
    accesses: int
    hits: int
    misses: int


class CacheSim:
    """Cache state plus at most one live transaction."""

    def __init__(self, geometry: CacheGeometry | None = None):
        self.geometry = g = geometry or CacheGeometry()
        n1, n2 = g.l1_lines, g.llc_lines
        self._l1_tag = np.full(n1, -1, dtype=np.int64)
        self._l1_stamp = np.zeros(n1, dtype=np.int64)
        self._l1_dirty = np.zeros(n1, dtype=np.uint8)
        self._l1_txw = np.zeros(n1, dtype=np.uint8)
        self._llc_tag = np.full(n2, -1, dtype=np.int64)
        self._llc_stamp = np.zeros(n2, dtype=np.int64)
        self._llc_trk = np.zeros(n2, dtype=np.uint8)
        self._trk_list = np.zeros(n2 + 16, dtype=np.int64)
        self._meta = np.array([0, 0, g.l1_sets, g.l1_ways, g.llc_sets, g.llc_ways, 0],
                              dtype=np.int64)
        self._out = np.zeros(4, dtype=np.int64)
        self._shift = g.line_size_bytes.bit_length() - 1
        self._tx: Optional[TxContext] = None
        self._next_tx = 0

    @property
    def state(self):
        return (self._l1_tag, self._l1_stamp, self._l1_dirty, self._l1_txw,
                self._llc_tag, self._llc_stamp, self._llc_trk, self._meta, self._trk_list)

    @property
    def in_transaction(self) -> bool:
        return self._tx is not None and self._tx.active

    # single accesses

    def _one(self, ref: MemRef, in_tx: bool) -> AccessOutcome:
        K.access_one(*self.state, ref.address >> self._shift, ref.kind == "write", in_tx,
                     self._out)
        level, ev1, cause, _ = (int(x) for x in self._out)
        evicted = None if ev1 < 0 else ev1 << self._shift
        return AccessOutcome(LEVELS[level], evicted, _CAUSES.get(cause))

    def access(self, ref: MemRef) -> AccessOutcome:
        if self.in_transaction:
            raise TxError("transaction active; use tx_access")
        return self._one(ref, False)

    def read(self, address: int) -> AccessOutcome:
        return self.access(MemRef(address, "read"))

    def write(self, address: int) -> AccessOutcome:
        return self.access(MemRef(address, "write"))

    # batches (line numbers, not byte addresses)

    def access_lines(self, lines: np.ndarray, writes: np.ndarray | bool = False,
                     tx: TxContext | None = None) -> tuple[np.ndarray, int]:
        """Run a batch of line-number accesses.

        Returns (levels, abort_index); abort_index is -1 when nothing aborted.
        Inside ``tx`` the batch stops at the aborting access.
        """
        lines = np.ascontiguousarray(lines, dtype=np.int64)
        if np.isscalar(writes) or np.ndim(writes) == 0:
            writes = np.full(lines.shape[0], bool(writes))
        writes = np.ascontiguousarray(writes, dtype=np.bool_)
        levels = np.full(lines.shape[0], -1, dtype=np.int64)
        if tx is None:
            if self.in_transaction:
                raise TxError("transaction active; pass tx")
            K.access_many(*self.state, lines, writes, False, levels)
            return levels, -1
        self._check_live(tx)
        idx, cause = K.access_many(*self.state, lines, writes, True, levels)
        done = lines.shape[0] if idx < 0 else idx + 1
        tx.instruction_count += done
        missed = int(np.count_nonzero(levels[:done] == K.LEVEL_MISS))
        tx.misses += missed
        tx.hits += done - missed
        if idx >= 0:
            self._abort(tx, _CAUSES[int(cause)])
        return levels, int(idx)

    # transactions

    def tx_begin(self) -> TxContext:
        if self.in_transaction:
            raise TxError("nested tx_begin")
        self._tx = TxContext(self._next_tx, _sim=self)
        self._next_tx += 1
        return self._tx

    def _check_live(self, tx: TxContext):
        if tx is not self._tx or not tx.active:
            raise TxError(f"transaction {tx.tx_id} is {tx.status}")

    def tx_access(self, tx: TxContext, ref: MemRef) -> AccessOutcome:
        self._check_live(tx)
        out = self._one(ref, True)
        tx.instruction_count += 1
        if out.level_hit == "miss":
            tx.misses += 1
        else:
            tx.hits += 1
        if out.caused_abort is not None:
            self._abort(tx, out.caused_abort)
        return out

    def _abort(self, tx: TxContext, cause: AbortCause):
        K.finish_tx(self._l1_tag, self._l1_dirty, self._l1_txw, self._llc_trk, self._meta,
                    self._trk_list, False)
        tx.status = "aborted"
        tx.cause = cause

    def tx_end(self, tx: TxContext) -> TxStats:
        self._check_live(tx)
        K.finish_tx(self._l1_tag, self._l1_dirty, self._l1_txw, self._llc_trk, self._meta,
                    self._trk_list, True)
        tx.status = "committed"
        return TxStats(tx.tx_id, tx.instruction_count, tx.hits, tx.misses)

    # inspection

    def _tracked_lines(self) -> set[int]:
        idx = np.nonzero(self._llc_trk)[0]
        return {int(t) << self._shift for t in self._llc_tag[idx]}

    def _written_lines(self) -> set[int]:
        idx = np.nonzero(self._l1_txw)[0]
        return {int(t) << self._shift for t in self._l1_tag[idx]}

    def l1_resident(self, address: int) -> bool:
        return bool(np.any(self._l1_tag == address >> self._shift))

    def llc_resident(self, address: int) -> bool:
        return bool(np.any(self._llc_tag == address >> self._shift))


class FootprintOverflow(RuntimeError):
    """Some LLC set received more distinct lines than it has ways."""


class FootprintSim:
    """Compulsory-miss accounting for non-transactional runs.

    When no LLC set is ever asked to hold more distinct lines than it has ways,
    no LLC eviction happens, so an access misses exactly when its line is
    touched for the first time. Under that condition this engine reports the
    same miss sequence as :class:`CacheSim` without simulating recency. It
    raises :class:`FootprintOverflow` as soon as the condition breaks.
    """

    def __init__(self, geometry: CacheGeometry | None = None):
        self.geometry = geometry or CacheGeometry()
        self._seen: set[int] = set()
        self._per_set = np.zeros(self.geometry.llc_sets, dtype=np.int64)
        self.in_transaction = False

    def access_lines(self, lines: np.ndarray, writes=False, tx=None) -> tuple[np.ndarray, int]:
        if tx is not None:
            raise TxError("footprint engine does not model transactions")
        lines = np.asarray(lines, dtype=np.int64)
        levels = np.full(lines.shape[0], K.LEVEL_LLC, dtype=np.int64)
        uniq, first = np.unique(lines, return_index=True)
        seen = self._seen
        fresh = [(int(i), int(u)) for u, i in zip(uniq, first) if int(u) not in seen]
        if fresh:
            new_lines = np.array([u for _, u in fresh], dtype=np.int64)
            np.add.at(self._per_set, new_lines % self.geometry.llc_sets, 1)
            if self._per_set.max() > self.geometry.llc_ways:
                raise FootprintOverflow("working set exceeds LLC associativity")
            seen.update(int(u) for u in new_lines)
            levels[[i for i, _ in fresh]] = K.LEVEL_MISS
        return levels, -1

    def all_seen(self, lines: np.ndarray) -> bool:
        seen = self._seen
        return all(int(x) in seen for x in np.unique(lines))


@dataclass(frozen=True)
class CostModel:
    hit_cost: float = 1.0
    miss_cost: float = 100.0
    tx_overhead: float = 200.0
    abort_replay_factor: float = 1.0

    @classmethod
    def from_file(cls, path) -> "CostModel":
        return _from_config(cls, path)


def cost_of(trace: TxTrace, model: CostModel | None = None) -> float:
    """Synthetic cost of a trace.

    Each transaction attempt costs its hits and misses plus ``tx_overhead``;
    aborted attempts are scaled by ``abort_replay_factor`` (1.0 = the whole
    attempt is wasted and re-executed).
    """
    m = model or CostModel()
    total = 0.0
    for e in trace:
        if isinstance(e, TxEnd):
            total += e.hits * m.hit_cost + e.misses * m.miss_cost + m.tx_overhead
        elif isinstance(e, TxAbort):
            attempt = e.hits * m.hit_cost + e.misses * m.miss_cost + m.tx_overhead
            total += m.abort_replay_factor * attempt
        elif isinstance(e, Reload):
            total += e.hits * m.hit_cost + len(e.misses) * m.miss_cost
        elif isinstance(e, InterTxMiss):
            total += m.miss_cost
        elif isinstance(e, PlainHits):
            total += e.count * m.hit_cost
    return total
