"""Compiled buffer operations backing :mod:`mfec_sa.store`.

All functions take the store's stacked state arrays plus an action index:

    keys   (A, alloc, dim)  entry keys
    hsh    (A, alloc)       hash of each key's bit pattern (exact-match filter)
    qv     (A, alloc)       return estimates
    cnt    (A, alloc)       aggregation counts
    last   (A, alloc)       last-access ticks
    ins    (A, alloc)       insertion ordinals
    pdist  (A, P, alloc)    entry distance to each pivot
    pivots (A, P, dim)      pivot keys
    meta   (A, 6)           n, tick, next insert index, total count, pivot count,
                            size when pivots were last chosen

Neighbour selection is exact: the first ``m`` entries by (squared distance,
insert_index), the same as sorting a full scan. With pivots present, entries
whose triangle-inequality lower bound exceeds the running m-th distance are
skipped. The bound is padded, so rounding can only admit extra candidates.
"""

from __future__ import annotations

import numpy as np
import numba
from numba import njit

N, TICK, NEXT_INS, TOTAL, NPIV, PIV_AT = range(6)
META_FIELDS = 6

EXACT_MATCH, MERGED, INSERTED, INSERTED_WITH_EVICTION = range(4)

PIVOT_MIN_ENTRIES = 64
NUM_PIVOTS = 8

_BOUND_RTOL = 1e-7
_BOUND_ATOL = 1e-12


@njit(cache=True, fastmath={"reassoc", "nsz"})
def sqdist(a, b):
    s = 0.0
    for j in range(a.shape[0]):
        t = a[j] - b[j]
        s += t * t
    return s


@njit(cache=True)
def same_bits(a, b):
    ua = a.view(np.uint64)
    ub = b.view(np.uint64)
    for j in range(ua.shape[0]):
        if ua[j] != ub[j]:
            return False
    return True


@njit(cache=True)
def key_hash(key):
    """64-bit FNV-style hash of the key's IEEE-754 bit pattern."""
    h = np.uint64(1469598103934665603)
    prime = np.uint64(1099511628211)
    bits = key.view(np.uint64)
    for j in range(bits.shape[0]):
        h = (h ^ bits[j]) * prime
        h ^= h >> np.uint64(29)
    return h


@njit(cache=True)
def find_exact(keys, hsh, ins, meta, a, query, qh):
    """Slot holding exactly ``query`` (lowest insert_index on duplicates), or -1."""
    found = -1
    for i in range(meta[a, N]):
        if hsh[a, i] == qh and same_bits(keys[a, i], query):
            if found < 0 or ins[a, i] < ins[a, found]:
                found = i
    return found


@njit(cache=True, inline="always")
def _insert(slot, d2, ins, m, cnt, out_slots, out_d2, out_ins):
    """Insert into a sorted top-m list; returns the new length."""
    if cnt == m:
        last = cnt - 1
        if d2 > out_d2[last] or (d2 == out_d2[last] and ins >= out_ins[last]):
            return cnt
        pos = last
    else:
        pos = cnt
        cnt += 1
    while pos > 0 and (out_d2[pos - 1] > d2 or (out_d2[pos - 1] == d2 and out_ins[pos - 1] > ins)):
        out_slots[pos] = out_slots[pos - 1]
        out_d2[pos] = out_d2[pos - 1]
        out_ins[pos] = out_ins[pos - 1]
        pos -= 1
    out_slots[pos] = slot
    out_d2[pos] = d2
    out_ins[pos] = ins
    return cnt


@njit(cache=True)
def scratch_arrays(m, alloc):
    """Work arrays for :func:`closest` with budget ``m`` on ``alloc`` slots."""
    return np.empty(3 * m, dtype=np.int64), np.empty(m + NUM_PIVOTS + alloc)


@njit(cache=True)
def closest(keys, ins, pdist, pivots, meta, a, query, m, out_slots, out_d2, iwork, fwork):
    """First ``m`` entries of buffer ``a``; returns (how many, exact-match slot or -1).

    ``iwork``/``fwork`` come from :func:`scratch_arrays`.
    """
    n = meta[a, N]
    npiv = meta[a, NPIV]
    k_a = keys[a]
    ins_a = ins[a]
    out_ins = iwork[:m]
    cnt = 0
    exact = -1
    if npiv == 0:
        for i in range(n):
            d2 = sqdist(k_a[i], query)
            if d2 == 0.0 and same_bits(k_a[i], query):
                if exact < 0 or ins_a[i] < ins_a[exact]:
                    exact = i
            if cnt < m or d2 <= out_d2[m - 1]:
                cnt = _insert(i, d2, ins_a[i], m, cnt, out_slots, out_d2, out_ins)
        return cnt, exact

    pd = pdist[a]
    qp = fwork[m:m + npiv]
    qmax = 0.0
    for p in range(npiv):
        qp[p] = np.sqrt(sqdist(query, pivots[a, p]))
        if qp[p] > qmax:
            qmax = qp[p]
    # Single pass. Once m candidates are held, an entry is skipped when its
    # triangle-inequality lower bound exceeds the current m-th distance. That
    # distance only shrinks, so a skipped entry could never have qualified.
    # The bound is padded against rounding in the stored pivot distances.
    bound = np.inf
    for i in range(n):
        if cnt == m:
            lb = 0.0
            for p in range(npiv):
                g = abs(pd[p, i] - qp[p])
                if g > lb:
                    lb = g
            if lb > bound:
                continue
        d2 = sqdist(k_a[i], query)
        if d2 == 0.0 and same_bits(k_a[i], query):
            if exact < 0 or ins_a[i] < ins_a[exact]:
                exact = i
        if cnt < m or d2 <= out_d2[m - 1]:
            cnt = _insert(i, d2, ins_a[i], m, cnt, out_slots, out_d2, out_ins)
            if cnt == m:
                tau = np.sqrt(out_d2[m - 1])
                bound = tau + _BOUND_RTOL * max(tau, qmax) + _BOUND_ATOL
    return cnt, exact


@njit(cache=True)
def _tick(meta, a):
    meta[a, TICK] += 1
    return meta[a, TICK]


@njit(cache=True)
def knn_one(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, a, query, k, used, d2, iwork, fwork):
    """Count-weighted kNN estimate for buffer ``a``; returns (value, entries used).

    ``used`` receives the contributing slots, nearest first; ``d2`` (length
    ``k``) their squared distances. An empty buffer yields (nan, 0).
    """
    n = meta[a, N]
    if n == 0:
        return np.nan, 0
    tick = _tick(meta, a)
    exact = find_exact(keys, hsh, ins, meta, a, query, key_hash(query))
    if exact >= 0:
        last[a, exact] = tick
        used[0] = exact
        d2[0] = 0.0
        return qv[a, exact], 1
    got, _ = closest(keys, ins, pdist, pivots, meta, a, query, min(k, n), used, d2, iwork, fwork)
    num = 0.0
    den = 0
    nused = 0
    for j in range(got):
        s = used[j]
        c = cnt[a, s]
        num += qv[a, s] * c
        den += c
        last[a, s] = tick
        nused += 1
        if den >= k:
            break
    return num / den, nused


@njit(cache=True)
def action_values(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, query, k, out, best):
    """Estimate every action at ``query`` (empty buffers get +inf).

    Writes the indices of all maximal actions to ``best`` and returns their number.
    """
    used = np.empty(k, dtype=np.int64)
    d2 = np.empty(k)
    iwork, fwork = scratch_arrays(k, keys.shape[1])
    top = -np.inf
    nbest = 0
    for a in range(meta.shape[0]):
        if meta[a, N] == 0:
            v = np.inf
        else:
            v, _ = knn_one(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, a, query, k, used, d2,
                           iwork, fwork)
        out[a] = v
        if v > top:
            top = v
            nbest = 0
        if v == top:
            best[nbest] = a
            nbest += 1
    return nbest


@njit(cache=True)
def nearest_one(keys, ins, last, pdist, pivots, meta, a, query):
    """(slot, squared distance) of the nearest entry, touching it; slot -1 when empty."""
    if meta[a, N] == 0:
        return -1, np.nan
    slots = np.empty(1, dtype=np.int64)
    d2 = np.empty(1)
    iwork, fwork = scratch_arrays(1, keys.shape[1])
    closest(keys, ins, pdist, pivots, meta, a, query, 1, slots, d2, iwork, fwork)
    last[a, slots[0]] = _tick(meta, a)
    return slots[0], d2[0]


@njit(cache=True)
def _set_pivot_dists(keys, pdist, pivots, meta, a, slot):
    for p in range(meta[a, NPIV]):
        pdist[a, p, slot] = np.sqrt(sqdist(keys[a, slot], pivots[a, p]))


@njit(cache=True)
def build_pivots(keys, pdist, pivots, meta, a):
    """Choose pivots by farthest-point sampling over the current entries."""
    n = meta[a, N]
    npiv = min(pivots.shape[1], n)
    gap = np.full(n, np.inf)
    pick = 0
    for p in range(npiv):
        pivots[a, p] = keys[a, pick]
        best = -1.0
        for i in range(n):
            d = np.sqrt(sqdist(keys[a, i], pivots[a, p]))
            pdist[a, p, i] = d
            if d < gap[i]:
                gap[i] = d
            if gap[i] > best:
                best = gap[i]
                pick = i
    meta[a, NPIV] = npiv
    meta[a, PIV_AT] = n


@njit(cache=True)
def rehash(keys, hsh, meta):
    for a in range(meta.shape[0]):
        for i in range(meta[a, N]):
            hsh[a, i] = key_hash(keys[a, i])


@njit(cache=True)
def lru_slot(last, ins, meta, a):
    best = 0
    for i in range(1, meta[a, N]):
        if last[a, i] < last[a, best] or (last[a, i] == last[a, best] and ins[a, i] < ins[a, best]):
            best = i
    return best


@njit(cache=True)
def _remove(keys, hsh, qv, cnt, last, ins, pdist, meta, a, slot):
    """Drop ``slot`` by moving the final entry into its place."""
    n = meta[a, N]
    meta[a, TOTAL] -= cnt[a, slot]
    tail = n - 1
    if slot != tail:
        keys[a, slot] = keys[a, tail]
        hsh[a, slot] = hsh[a, tail]
        qv[a, slot] = qv[a, tail]
        cnt[a, slot] = cnt[a, tail]
        last[a, slot] = last[a, tail]
        ins[a, slot] = ins[a, tail]
        for p in range(meta[a, NPIV]):
            pdist[a, p, slot] = pdist[a, p, tail]
    meta[a, N] = tail


@njit(cache=True)
def append(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, a, key, q, count, tick, insert_index):
    """Store a new entry in the next free slot (caller guarantees room)."""
    slot = meta[a, N]
    keys[a, slot] = key
    hsh[a, slot] = key_hash(key)
    qv[a, slot] = q
    cnt[a, slot] = count
    last[a, slot] = tick
    ins[a, slot] = insert_index
    if insert_index + 1 > meta[a, NEXT_INS]:
        meta[a, NEXT_INS] = insert_index + 1
    meta[a, N] = slot + 1
    meta[a, TOTAL] += count
    if slot + 1 >= PIVOT_MIN_ENTRIES and slot + 1 >= 4 * meta[a, PIV_AT]:
        build_pivots(keys, pdist, pivots, meta, a)
    elif meta[a, NPIV] > 0:
        _set_pivot_dists(keys, pdist, pivots, meta, a, slot)
    return slot


@njit(cache=True)
def writeback_one(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, capacity, a, key, ret,
                  eps_in, eps_out, evicted_key, info):
    """Apply one return to buffer ``a``.

    ``info`` receives (branch, slot, distance or -1, q_delta, nearest q or nan,
    evicted q, evicted count, evicted last_access, evicted insert_index); the
    evicted key goes to ``evicted_key``.
    """
    slot, d2 = nearest_one(keys, ins, last, pdist, pivots, meta, a, key)
    tick = meta[a, TICK] if slot >= 0 else _tick(meta, a)
    info[2] = -1.0
    info[4] = np.nan
    if slot >= 0:
        dist = np.sqrt(d2)
        old = qv[a, slot]
        info[2] = dist
        info[4] = old
        if d2 == 0.0 and same_bits(keys[a, slot], key):
            new = max(old, ret)
            qv[a, slot] = new
            info[0] = EXACT_MATCH
            info[1] = slot
            info[3] = new - old
            return
        if dist < eps_in and abs(ret - old) < eps_out:
            c = cnt[a, slot] + 1
            eta = 1.0 / c
            cnt[a, slot] = c
            meta[a, TOTAL] += 1
            new = old + eta * (ret - old)
            qv[a, slot] = new
            centroid = keys[a, slot]
            for j in range(centroid.shape[0]):
                centroid[j] += eta * (key[j] - centroid[j])
            hsh[a, slot] = key_hash(centroid)
            _set_pivot_dists(keys, pdist, pivots, meta, a, slot)
            info[0] = MERGED
            info[1] = slot
            info[3] = new - old
            return
    branch = INSERTED
    if meta[a, N] >= capacity:
        victim = lru_slot(last, ins, meta, a)
        evicted_key[:] = keys[a, victim]
        info[5] = qv[a, victim]
        info[6] = cnt[a, victim]
        info[7] = last[a, victim]
        info[8] = ins[a, victim]
        _remove(keys, hsh, qv, cnt, last, ins, pdist, meta, a, victim)
        branch = INSERTED_WITH_EVICTION
    info[0] = branch
    info[1] = append(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, a, key, ret, 1, tick,
                     meta[a, NEXT_INS])
    info[3] = 0.0


@njit(cache=True)
def writeback_episode(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, capacity, step_keys,
                      actions, returns, eps_in, eps_out, evicted_keys, infos):
    """Write back every step from last to first; row ``r`` of the outputs is the
    r-th writeback applied (step ``T - 1 - r``)."""
    T = actions.shape[0]
    for r in range(T):
        t = T - 1 - r
        writeback_one(keys, hsh, qv, cnt, last, ins, pdist, pivots, meta, capacity, actions[t],
                      step_keys[t], returns[t], eps_in, eps_out, evicted_keys[r], infos[r])


class FastCall:
    """Call a jitted kernel while skipping numba's per-call argument typing.

    Typing a dozen array arguments costs far more than the kernel itself on
    small buffers. The first call goes through the dispatcher, which compiles
    if needed; later calls reuse the compiled entry point for those argument
    types. Only use this at call sites whose argument types never change.
    """

    __slots__ = ("fn", "entry")

    def __init__(self, fn):
        self.fn = fn
        self.entry = None

    def __call__(self, *args):
        if self.entry is not None:
            return self.entry(*args)
        result = self.fn(*args)
        sig = tuple(numba.typeof(x) for x in args)
        cres = self.fn.overloads.get(sig)
        self.entry = getattr(cres, "entry_point", None)
        return result
