"""Independent reference implementations used as test oracles.

Everything here is deliberately naive: plain Python lists, full sorts,
``math.fsum`` where it matters. Nothing imports the package's kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sqdist(a, b) -> float:
    return math.fsum((float(x) - float(y)) ** 2 for x, y in zip(a, b))


def replicate_knn(entries, query, k):
    """Aggregated kNN by replicate expansion.

    ``entries`` is a list of (key, q, count, insert_index). Each entry is
    expanded into ``count`` identical replicas; replicas are sorted by
    distance (ties by insert_index); whole entries are taken until the
    running replica count reaches ``k``; the result is the replica mean.
    Returns (value, list of insert_index used), or (None, []) when empty.
    """
    if not entries:
        return None, []
    for key, q, count, ins in sorted(entries, key=lambda e: e[3]):
        if np.asarray(key, dtype=float).tobytes() == np.asarray(query, dtype=float).tobytes():
            return q, [ins]
    replicas = []
    for key, q, count, ins in entries:
        d = sqdist(key, query)
        replicas.extend([(d, ins, q)] * count)
    replicas.sort(key=lambda r: (r[0], r[1]))
    taken = []
    for i, rep in enumerate(replicas):
        taken.append(rep)
        nxt = replicas[i + 1] if i + 1 < len(replicas) else None
        # stop once k replicas are in, but never split an entry's replicas
        if len(taken) >= k and (nxt is None or nxt[1] != rep[1]):
            break
    used = []
    for _, ins, _ in taken:
        if ins not in used:
            used.append(ins)
    return math.fsum(r[2] for r in taken) / len(taken), used


def running_mean_merge(q0, key0, returns, keys):
    """Sequential merges of ``returns``/``keys`` into an entry of count 1.

    Uses exact rational bookkeeping of the running mean, independent of the
    incremental eta = 1/C update.
    """
    from fractions import Fraction

    qs = [Fraction(q0)] + [Fraction(r) for r in returns]
    ks = [[Fraction(x) for x in key0]] + [[Fraction(x) for x in k] for k in keys]
    n = len(qs)
    q = float(sum(qs) / n)
    key = [float(sum(col) / n) for col in zip(*ks)]
    return n, q, np.array(key)


@dataclass(eq=False)
class RefEntry:
    key: np.ndarray
    q: float
    count: int
    last_access: int
    insert_index: int


class RefBuffer:
    """Straightforward list-based action buffer with the same observable rules."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.entries: list[RefEntry] = []
        self.tick = 0
        self.next_ins = 0

    def _ordered(self, query):
        return sorted(self.entries, key=lambda e: (sqdist(e.key, query), e.insert_index))

    def nearest(self, query):
        if not self.entries:
            return None
        self.tick += 1
        e = self._ordered(query)[0]
        e.last_access = self.tick
        return e, math.sqrt(sqdist(e.key, query))

    def knn(self, query, k):
        if not self.entries:
            return None
        self.tick += 1
        qb = np.asarray(query, dtype=float).tobytes()
        exact = [e for e in self.entries if e.key.tobytes() == qb]
        if exact:
            e = min(exact, key=lambda e: e.insert_index)
            e.last_access = self.tick
            return e.q
        num, den = 0.0, 0
        for e in self._ordered(query):
            num += e.q * e.count
            den += e.count
            e.last_access = self.tick
            if den >= k:
                break
        return num / den

    def writeback(self, key, ret, eps_in, eps_out):
        key = np.asarray(key, dtype=float)
        found = self.nearest(key)
        if found is None:
            self.tick += 1
        else:
            e, d = found
            if d == 0.0 and e.key.tobytes() == key.tobytes():
                e.q = max(e.q, ret)
                return "ExactMatch", None
            if d < eps_in and abs(ret - e.q) < eps_out:
                e.count += 1
                eta = 1.0 / e.count
                e.q = e.q + eta * (ret - e.q)
                e.key = e.key + eta * (key - e.key)
                return "Merged", None
        evicted = None
        if len(self.entries) >= self.capacity:
            evicted = min(self.entries, key=lambda e: (e.last_access, e.insert_index))
            self.entries.remove(evicted)
        self.entries.append(RefEntry(key.copy(), float(ret), 1, self.tick, self.next_ins))
        self.next_ins += 1
        return ("InsertedWithEviction" if evicted else "Inserted"), evicted

    def snapshot(self):
        return sorted(((e.insert_index, e.key.tobytes(), e.q, e.count, e.last_access)
                       for e in self.entries))


def bfs_distance(side, start, goal):
    """Grid shortest path by plain breadth-first search (4 moves, wall clipping)."""
    from collections import deque

    seen = {start: 0}
    todo = deque([start])
    while todo:
        r, c = todo.popleft()
        for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
            nxt = (min(max(r + dr, 0), side - 1), min(max(c + dc, 0), side - 1))
            if nxt not in seen:
                seen[nxt] = seen[(r, c)] + 1
                todo.append(nxt)
    return seen.get(goal)
