"""Execution trace records.

A :class:`TxTrace` is an ordered list of events emitted by the runtime. Hit
counts are kept for cost accounting only; the attacker-visible projection
lives in :mod:`cmo.checker`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Union


@dataclass(frozen=True)
class TxBegin:
    tx_id: int


@dataclass(frozen=True)
class TxEnd:
    tx_id: int
    accesses: int
    hits: int
    misses: int


@dataclass(frozen=True)
class TxAbort:
    tx_id: int
    cause: str
    accesses: int
    hits: int
    misses: int


@dataclass(frozen=True)
class Reload:
    """A non-transactional data-movement phase inside a leaky section.

    ``kind`` is one of ``load``, ``reload``, ``writeback``, ``preload``, ``settle``.
    """

    kind: str
    cls: str
    partition: int
    hits: int
    misses: tuple[int, ...]


@dataclass(frozen=True)
class InterTxMiss:
    line: int


@dataclass(frozen=True)
class PlainHits:
    count: int


Event = Union[TxBegin, TxEnd, TxAbort, Reload, InterTxMiss, PlainHits]

_EVENT_TYPES = {
    "tx_begin": TxBegin,
    "tx_end": TxEnd,
    "tx_abort": TxAbort,
    "reload": Reload,
    "inter_tx_miss": InterTxMiss,
    "plain_hits": PlainHits,
}
_EVENT_NAMES = {cls: name for name, cls in _EVENT_TYPES.items()}


class MalformedTrace(ValueError):
    pass


@dataclass
class TxTrace:
    events: list = field(default_factory=list)

    def append(self, event: Event) -> None:
        self.events.append(event)

    def plain_access(self, hits: int, miss_lines: Iterable[int] = ()) -> None:
        """Record accesses made outside any transaction or section phase."""
        for line in miss_lines:
            self.events.append(InterTxMiss(int(line)))
        if hits:
            last = self.events[-1] if self.events else None
            if isinstance(last, PlainHits):
                self.events[-1] = PlainHits(last.count + hits)
            else:
                self.events.append(PlainHits(hits))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    # summary statistics

    def committed(self) -> list[TxEnd]:
        return [e for e in self.events if isinstance(e, TxEnd)]

    def aborts(self) -> list[TxAbort]:
        return [e for e in self.events if isinstance(e, TxAbort)]

    def tx_sizes(self) -> list[int]:
        return [e.accesses for e in self.committed()]

    def validate(self) -> None:
        """Check begin/end pairing (depth <= 1) and that reloads sit outside transactions."""
        open_tx = None
        for i, e in enumerate(self.events):
            if isinstance(e, TxBegin):
                if open_tx is not None:
                    raise MalformedTrace(f"event {i}: nested tx_begin")
                open_tx = e.tx_id
            elif isinstance(e, (TxEnd, TxAbort)):
                if open_tx != e.tx_id:
                    raise MalformedTrace(f"event {i}: close of tx {e.tx_id} without begin")
                open_tx = None
            elif isinstance(e, (Reload, InterTxMiss, PlainHits)) and open_tx is not None:
                raise MalformedTrace(f"event {i}: {type(e).__name__} inside transaction")
        if open_tx is not None:
            raise MalformedTrace("trace ends inside a transaction")

    # serialization

    def to_records(self) -> list[dict]:
        out = []
        for e in self.events:
            rec = {"event": _EVENT_NAMES[type(e)], **asdict(e)}
            if "misses" in rec and isinstance(rec["misses"], tuple):
                rec["misses"] = list(rec["misses"])
            out.append(rec)
        return out

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())

    @classmethod
    def loads(cls, text: str) -> "TxTrace":
        trace = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = _EVENT_TYPES[rec.pop("event")]
            if kind is Reload:
                rec["misses"] = tuple(rec["misses"])
            trace.append(kind(**rec))
        return trace
