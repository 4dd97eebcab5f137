"""Cache-miss obliviousness checks over execution traces.

The attacker model sees transaction boundaries, aborts, the number of
accesses in each transaction, and every cache miss that happens outside a
transaction (section phases and plain code). It does not see hits, nor
anything about which lines a committed transaction touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .cache import CacheGeometry
from .runtime import Runtime
from .trace import InterTxMiss, MalformedTrace, PlainHits, Reload, TxAbort, TxBegin, TxEnd, TxTrace

PAGE_SIZE = 4096

ObservableTrace = tuple


def extract_observable(trace: TxTrace, granularity: str = "line") -> ObservableTrace:
    """Project a trace onto what an observer of misses and transactions learns.

    ``granularity="page"`` reduces every miss address to its page number.
    Raises :class:`MalformedTrace` on bad nesting or on a committed
    transaction that missed.
    """
    if granularity not in ("line", "page"):
        raise ValueError("granularity must be 'line' or 'page'")
    trace.validate()
    unit = (lambda a: a // PAGE_SIZE) if granularity == "page" else (lambda a: a)
    out = []
    for e in trace:
        if isinstance(e, TxBegin):
            out.append(("begin",))
        elif isinstance(e, TxEnd):
            if e.misses:
                raise MalformedTrace(f"committed transaction {e.tx_id} had {e.misses} misses")
            out.append(("end", e.accesses))
        elif isinstance(e, TxAbort):
            out.append(("abort", e.cause, e.accesses))
        elif isinstance(e, Reload):
            out.append(("reload", e.kind, e.cls, tuple(unit(a) for a in e.misses)))
        elif isinstance(e, InterTxMiss):
            out.append(("miss", unit(e.line)))
        elif isinstance(e, PlainHits):
            continue
        else:
            raise MalformedTrace(f"unknown event {e!r}")
    return tuple(out)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    index: int | None = None
    pair: tuple | None = None
    note: str = ""

    def __bool__(self) -> bool:
        return self.passed

    def report(self) -> str:
        if self.passed:
            return "pass" + (f" ({self.note})" if self.note else "")
        a, b = self.pair
        text = f"fail at event {self.index}: {a!r} vs {b!r}"
        return text + (f"\n  note: {self.note}" if self.note else "")


def compare(a: ObservableTrace, b: ObservableTrace) -> Verdict:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return Verdict(False, i, (x, y))
    if len(a) != len(b):
        i = min(len(a), len(b))
        return Verdict(False, i, (a[i] if i < len(a) else None, b[i] if i < len(b) else None))
    return Verdict(True)


def public_shape(x: Any):
    """Shape, dtype and scalar values that an input reveals by definition."""
    if isinstance(x, np.ndarray):
        return ("array", x.shape, x.dtype.str)
    if isinstance(x, (list, tuple)):
        return (type(x).__name__, tuple(public_shape(v) for v in x))
    if isinstance(x, dict):
        return ("dict", tuple(sorted((k, public_shape(v)) for k, v in x.items())))
    if isinstance(x, (int, float, np.integer, np.floating)):
        return ("scalar", type(x).__name__)
    return ("object", type(x).__name__)


def check_pairwise(program: Callable[..., Any], public_params: dict | None, input_a, input_b,
                   seed: int = 0, *, mode: str = "cmo_dynamic",
                   geometry: CacheGeometry | None = None, engine: str | None = None,
                   granularity: str = "line") -> Verdict:
    """Run ``program(runtime, input, seed=seed, **public_params)`` on both inputs and compare.

    The two inputs must have the same public shape. Both runs use the same
    seed: randomness is public, so equal seeds must give equal traces.
    """
    if public_shape(input_a) != public_shape(input_b):
        raise ValueError("inputs differ in public parameters; comparison is meaningless")
    params = dict(public_params or {})
    traces = []
    for x in (input_a, input_b):
        rt = Runtime(mode, geometry, engine)
        program(rt, x, seed=seed, **params)
        traces.append(rt.trace)
    obs = [extract_observable(t, granularity) for t in traces]
    verdict = compare(*obs)
    if not verdict:
        ta, tb = (sum(isinstance(e, TxBegin) for e in t) for t in traces)
        if ta != tb:
            verdict = Verdict(False, verdict.index, verdict.pair,
                              f"transaction count depends on the data ({ta} vs {tb})")
    return verdict


def check_abort_freedom(trace: TxTrace) -> Verdict:
    for i, e in enumerate(trace):
        if isinstance(e, TxAbort):
            return Verdict(False, i, (e, None), f"abort: {e.cause}")
    return Verdict(True)
