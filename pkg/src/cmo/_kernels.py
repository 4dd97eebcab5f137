"""Compiled inner loops for the two-level cache model.

State is a bundle of flat arrays; way ``w`` of set ``s`` lives at ``s * ways + w``.
``meta`` holds [clock, tracked_count, l1_sets, l1_ways, llc_sets, llc_ways, write_count].
"""

import numpy as np
from numba import njit

LEVEL_L1 = 0
LEVEL_LLC = 1
LEVEL_MISS = 2

NO_ABORT = 0
ABORT_DIRTY = 1
ABORT_READSET = 2


@njit(cache=True)
def _find(tags, base, ways, line):
    for w in range(ways):
        if tags[base + w] == line:
            return base + w
    return -1


@njit(cache=True)
def _victim(tags, stamps, base, ways):
    best = base
    for w in range(ways):
        i = base + w
        if tags[i] < 0:
            return i
        if stamps[i] < stamps[best]:
            best = i
    return best


@njit(cache=True)
def access_one(l1_tag, l1_stamp, l1_dirty, l1_txw, llc_tag, llc_stamp, llc_trk,
               meta, trk_list, line, is_write, in_tx, out):
    """Apply one access. Writes (level, evicted_l1, abort_cause, evicted_llc) into ``out``."""
    meta[0] += 1
    clock = meta[0]
    l1_sets, l1_ways = meta[2], meta[3]
    llc_sets, llc_ways = meta[4], meta[5]
    abort = NO_ABORT
    ev1 = -1
    ev2 = -1

    b1 = (line % l1_sets) * l1_ways
    b2 = (line % llc_sets) * llc_ways
    i1 = _find(l1_tag, b1, l1_ways, line)
    i2 = _find(llc_tag, b2, llc_ways, line)
    if i1 >= 0:
        level = LEVEL_L1
    elif i2 >= 0:
        level = LEVEL_LLC
    else:
        level = LEVEL_MISS

    if i2 < 0:
        i2 = _victim(llc_tag, llc_stamp, b2, llc_ways)
        old = llc_tag[i2]
        if old >= 0:
            ev2 = old
            # inclusive LLC: back-invalidate the L1 copy
            j = _find(l1_tag, (old % l1_sets) * l1_ways, l1_ways, old)
            if llc_trk[i2] != 0:
                if j >= 0 and l1_txw[j] != 0:
                    abort = ABORT_DIRTY
                else:
                    abort = ABORT_READSET
            if j >= 0:
                if l1_txw[j] != 0:
                    l1_txw[j] = 0
                    meta[6] -= 1
                l1_tag[j] = -1
                l1_dirty[j] = 0
            if llc_trk[i2] != 0:
                llc_trk[i2] = 0
        llc_tag[i2] = line
        llc_trk[i2] = 0
    llc_stamp[i2] = clock

    if i1 < 0:
        i1 = _victim(l1_tag, l1_stamp, b1, l1_ways)
        if l1_tag[i1] >= 0:
            ev1 = l1_tag[i1]
            if l1_txw[i1] != 0:
                if abort == NO_ABORT:
                    abort = ABORT_DIRTY
                l1_txw[i1] = 0
                meta[6] -= 1
        l1_tag[i1] = line
        l1_dirty[i1] = 0
    l1_stamp[i1] = clock
    if is_write:
        l1_dirty[i1] = 1

    if in_tx:
        if llc_trk[i2] == 0:
            llc_trk[i2] = 1
            trk_list[meta[1]] = i2
            meta[1] += 1
        if is_write and l1_txw[i1] == 0:
            l1_txw[i1] = 1
            meta[6] += 1

    out[0] = level
    out[1] = ev1
    out[2] = abort
    out[3] = ev2


@njit(cache=True)
def access_many(l1_tag, l1_stamp, l1_dirty, l1_txw, llc_tag, llc_stamp, llc_trk,
                meta, trk_list, lines, writes, in_tx, levels):
    """Run a batch; stops at the first abort and returns its index (or -1)."""
    out = np.empty(4, dtype=np.int64)
    for k in range(lines.shape[0]):
        access_one(l1_tag, l1_stamp, l1_dirty, l1_txw, llc_tag, llc_stamp, llc_trk,
                   meta, trk_list, lines[k], writes[k], in_tx, out)
        levels[k] = out[0]
        if out[2] != NO_ABORT:
            return k, out[2]
    return -1, NO_ABORT


@njit(cache=True)
def finish_tx(l1_tag, l1_dirty, l1_txw, llc_trk, meta, trk_list, commit):
    """Clear transactional tracking. Commit writes dirty lines back; abort discards them."""
    for k in range(meta[1]):
        llc_trk[trk_list[k]] = 0
    meta[1] = 0
    for i in range(l1_tag.shape[0]):
        if l1_txw[i] != 0:
            l1_txw[i] = 0
            l1_dirty[i] = 0
            if not commit:
                l1_tag[i] = -1
    meta[6] = 0
