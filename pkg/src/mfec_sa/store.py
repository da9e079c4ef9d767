"""Episodic memory: per-action buffers of aggregated (state, return) entries.

A :class:`QECStore` keeps every action's entries in stacked numpy arrays so a
whole action-selection step or an episode's writeback runs in one compiled
call (see :mod:`mfec_sa._kernels`). :class:`ActionBuffer` is a view of one
action's slice and exposes the single-entry operations.

Slots are reused after eviction, so slot order is not insertion order;
``insert_index`` carries the latter and breaks every distance or recency tie.
Nearest-neighbour search is exact and matches a plain linear scan.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigError, FormatError, InputError

UNLIMITED = 2**32 - 1
"""Capacity sentinel meaning "never evict" (the largest value a snapshot can hold)."""

MAGIC = b"EPCB"
VERSION = 1


class Branch(enum.Enum):
    EXACT_MATCH = "ExactMatch"
    MERGED = "Merged"
    INSERTED = "Inserted"
    INSERTED_WITH_EVICTION = "InsertedWithEviction"


_BRANCHES = (Branch.EXACT_MATCH, Branch.MERGED, Branch.INSERTED, Branch.INSERTED_WITH_EVICTION)


@dataclass(frozen=True)
class Entry:
    """Read-only copy of one stored entry."""

    key: np.ndarray
    q: float
    count: int
    last_access: int
    insert_index: int
    slot: int = -1

    def same_as(self, other: Entry) -> bool:
        return (
            self.key.tobytes() == other.key.tobytes()
            and struct.pack("<d", self.q) == struct.pack("<d", other.q)
            and (self.count, self.last_access, self.insert_index)
            == (other.count, other.last_access, other.insert_index)
        )


@dataclass(frozen=True)
class WritebackOutcome:
    branch: Branch
    distance_to_nearest: float | None
    q_delta: float
    slot: int
    action: int = 0
    nearest_q: float | None = None
    """Q of the nearest entry before the update; None for an empty buffer."""
    evicted: Entry | None = None
    """Entry removed to make room (``INSERTED_WITH_EVICTION`` only)."""


def _outcome(info: np.ndarray, evicted_key: np.ndarray, action: int) -> WritebackOutcome:
    branch = _BRANCHES[int(info[0])]
    evicted = None
    if branch is Branch.INSERTED_WITH_EVICTION:
        evicted = Entry(evicted_key.copy(), float(info[5]), int(info[6]), int(info[7]), int(info[8]))
    return WritebackOutcome(
        branch=branch,
        distance_to_nearest=None if info[2] < 0 else float(info[2]),
        q_delta=float(info[3]),
        slot=int(info[1]),
        action=action,
        nearest_q=None if math.isnan(info[4]) else float(info[4]),
        evicted=evicted,
    )


class QECStore:
    """The agent's whole memory: one bounded buffer per action."""

    def __init__(self, num_actions: int, dim: int, capacity: int = UNLIMITED):
        if num_actions < 1:
            raise ConfigError(f"num_actions must be >= 1, got {num_actions}", key="num-actions")
        if dim < 1:
            raise ConfigError(f"key dimension must be >= 1, got {dim}", key="proj-dim")
        if not 1 <= capacity <= UNLIMITED:
            raise ConfigError(f"capacity must be in [1, {UNLIMITED}], got {capacity}", key="capacity")
        self.num_actions = int(num_actions)
        self.dim = int(dim)
        self.capacity = int(capacity)
        A = self.num_actions
        alloc = min(self.capacity, 64)
        self._keys = np.zeros((A, alloc, dim))
        self._hsh = np.zeros((A, alloc), dtype=np.uint64)
        self._q = np.zeros((A, alloc))
        self._cnt = np.zeros((A, alloc), dtype=np.int64)
        self._last = np.zeros((A, alloc), dtype=np.int64)
        self._ins = np.zeros((A, alloc), dtype=np.int64)
        self._pdist = np.zeros((A, K.NUM_PIVOTS, alloc))
        self._pivots = np.zeros((A, K.NUM_PIVOTS, dim))
        self._meta = np.zeros((A, K.META_FIELDS), dtype=np.int64)
        self.buffers = [ActionBuffer(self, a) for a in range(A)]
        self._values = np.empty(A)
        self._best = np.empty(A, dtype=np.int64)
        self._action_values = K.FastCall(K.action_values)
        self._writeback_kernel = K.FastCall(K.writeback_episode)

    @property
    def _state(self):
        return (self._keys, self._hsh, self._q, self._cnt, self._last, self._ins, self._pdist,
                self._pivots, self._meta)

    def __getitem__(self, action: int) -> ActionBuffer:
        return self.buffers[action]

    def __len__(self) -> int:
        return self.num_actions

    def total_size(self) -> int:
        """Number of stored entries across all buffers (not aggregation counts)."""
        return int(self._meta[:, K.N].sum())

    def buffer_sizes(self) -> list[int]:
        return [int(n) for n in self._meta[:, K.N]]

    def reserve(self, extra: Sequence[int]) -> None:
        """Make room for ``extra[a]`` more entries in each buffer without evicting."""
        alloc = self._q.shape[1]
        if alloc >= self.capacity:
            return
        need = max(min(int(n) + int(e), self.capacity) for n, e in zip(self._meta[:, K.N], extra))
        if need <= alloc:
            return
        new = min(self.capacity, max(need, 2 * alloc))
        for name in ("_keys", "_hsh", "_q", "_cnt", "_last", "_ins"):
            old = getattr(self, name)
            arr = np.zeros((old.shape[0], new) + old.shape[2:], dtype=old.dtype)
            arr[:, :alloc] = old
            setattr(self, name, arr)
        pd = np.zeros((self.num_actions, K.NUM_PIVOTS, new))
        pd[:, :, :alloc] = self._pdist
        self._pdist = pd

    def action_values(self, key: np.ndarray, k: int) -> np.ndarray:
        """kNN estimate for every action at ``key``; empty buffers give +inf."""
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}", key="k")
        key = self._check_key(key)
        out = np.empty(self.num_actions)
        best = np.empty(self.num_actions, dtype=np.int64)
        K.action_values(*self._state, key, int(k), out, best)
        return out

    def greedy_actions(self, key: np.ndarray, k: int) -> np.ndarray:
        """Actions whose estimate at ``key`` is maximal (all of them on a tie)."""
        return self._greedy(self._check_key(key), k).copy()

    def _greedy(self, key: np.ndarray, k: int) -> np.ndarray:
        # view into a reused buffer; valid until the next call
        nbest = self._action_values(*self._state, key, int(k), self._values, self._best)
        return self._best[:nbest]

    def writeback_episode(self, keys: Sequence[np.ndarray], actions: Sequence[int],
                          returns: Sequence[float], eps_in: float, eps_out: float) -> list[WritebackOutcome]:
        """Write back a whole episode, last step first; outcomes in application order."""
        if len(actions) == 0:
            return []
        infos, evicted, acts = self._writeback(keys, actions, returns, eps_in, eps_out)
        T = len(acts)
        return [_outcome(infos[r], evicted[r], int(acts[T - 1 - r])) for r in range(T)]

    def writeback_branches(self, keys: Sequence[np.ndarray], actions: Sequence[int],
                           returns: Sequence[float], eps_in: float, eps_out: float) -> np.ndarray:
        """Like :meth:`writeback_episode` but only reports the branch codes.

        Codes index ``list(Branch)``; much cheaper when per-step detail is not needed.
        """
        if len(actions) == 0:
            return np.zeros(0, dtype=np.int64)
        infos, _, _ = self._writeback(keys, actions, returns, eps_in, eps_out)
        return infos[:, 0].astype(np.int64)

    def _writeback(self, keys, actions, returns, eps_in, eps_out):
        T = len(actions)
        if not (len(keys) == len(returns) == T):
            raise InputError("keys, actions and returns must have equal length")
        acts = np.asarray(actions, dtype=np.int64)
        if acts.min() < 0 or acts.max() >= self.num_actions:
            raise InputError(f"actions must lie in [0, {self.num_actions})")
        ks = np.asarray(keys, dtype=np.float64)
        if ks.shape != (T, self.dim):
            raise InputError(f"keys have shape {ks.shape}, expected ({T}, {self.dim})")
        rets = np.asarray(returns, dtype=np.float64)
        if not (np.all(np.isfinite(ks)) and np.all(np.isfinite(rets))):
            raise InputError("keys and returns must be finite")
        _check_thresholds(eps_in, eps_out)
        self.reserve(np.bincount(acts, minlength=self.num_actions))
        evicted = np.empty((T, self.dim))
        infos = np.zeros((T, 9))
        self._writeback_kernel(*self._state, self.capacity, ks, acts, rets, float(eps_in),
                            float(eps_out), evicted, infos)
        return infos, evicted, acts

    def _check_key(self, key) -> np.ndarray:
        q = np.ascontiguousarray(key, dtype=np.float64)
        if q.shape != (self.dim,):
            raise InputError(f"key has shape {q.shape}, store holds keys of shape ({self.dim},)")
        return q

    def same_as(self, other: QECStore) -> bool:
        if (self.num_actions, self.dim, self.capacity) != (other.num_actions, other.dim, other.capacity):
            return False
        for a, b in zip(self.buffers, other.buffers):
            if (a.tick_counter, a.next_insert_index) != (b.tick_counter, b.next_insert_index):
                return False
            ea, eb = a.entries(), b.entries()
            if len(ea) != len(eb) or not all(x.same_as(y) for x, y in zip(ea, eb)):
                return False
        return True


def _check_thresholds(eps_in: float, eps_out: float) -> None:
    if not eps_in >= 0:
        raise ConfigError(f"eps_in must be >= 0, got {eps_in}", key="eps-in")
    if not eps_out >= 0:
        raise ConfigError(f"eps_out must be >= 0, got {eps_out}", key="eps-out")


class ActionBuffer:
    """One action's entries inside a :class:`QECStore`.

    ``ActionBuffer(dim, capacity)`` builds a standalone buffer backed by a
    private single-action store.
    """

    def __init__(self, store_or_dim, action_or_capacity: int = UNLIMITED):
        if isinstance(store_or_dim, QECStore):
            self.store = store_or_dim
            self.action = int(action_or_capacity)
        else:
            self.store = QECStore(1, int(store_or_dim), int(action_or_capacity))
            self.store.buffers[0] = self
            self.action = 0

    @property
    def dim(self) -> int:
        return self.store.dim

    @property
    def capacity(self) -> int:
        return self.store.capacity

    @property
    def tick_counter(self) -> int:
        return int(self.store._meta[self.action, K.TICK])

    @property
    def next_insert_index(self) -> int:
        return int(self.store._meta[self.action, K.NEXT_INS])

    @property
    def total_count(self) -> int:
        """Number of individual experiences aggregated into this buffer."""
        return int(self.store._meta[self.action, K.TOTAL])

    def __len__(self) -> int:
        return int(self.store._meta[self.action, K.N])

    def __getitem__(self, slot: int) -> Entry:
        if not 0 <= slot < len(self):
            raise IndexError(slot)
        s, a = self.store, self.action
        return Entry(
            key=s._keys[a, slot].copy(),
            q=float(s._q[a, slot]),
            count=int(s._cnt[a, slot]),
            last_access=int(s._last[a, slot]),
            insert_index=int(s._ins[a, slot]),
            slot=slot,
        )

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries())

    def entries(self) -> list[Entry]:
        return [self[i] for i in range(len(self))]

    def nearest(self, query) -> tuple[Entry, float] | None:
        """Closest entry and its Euclidean distance, or None when empty.

        Ties go to the lowest insert_index; the entry's recency is refreshed.
        """
        q = self.store._check_key(query)
        s = self.store
        slot, d2 = K.nearest_one(s._keys, s._ins, s._last, s._pdist, s._pivots, s._meta, self.action, q)
        if slot < 0:
            return None
        return self[int(slot)], math.sqrt(d2)

    def knn_estimate(self, query, k: int) -> float | None:
        """Count-weighted kNN estimate at ``query``, or None when empty.

        An exact key match answers alone. Otherwise entries are taken in
        distance order until their counts reach ``k`` (or the buffer runs
        out) and averaged with counts as weights.
        """
        return self.knn_with_support(query, k)[0]

    def knn_with_support(self, query, k: int) -> tuple[float | None, np.ndarray]:
        """:meth:`knn_estimate` plus the slots that contributed, nearest first."""
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}", key="k")
        q = self.store._check_key(query)
        used = np.empty(int(k), dtype=np.int64)
        d2 = np.empty(int(k))
        iwork, fwork = K.scratch_arrays(int(k), self.store._q.shape[1])
        value, nused = K.knn_one(*self.store._state, self.action, q, int(k), used, d2, iwork, fwork)
        if nused == 0:
            return None, used[:0]
        return float(value), used[:nused]

    def writeback(self, key, ret: float, eps_in: float, eps_out: float) -> WritebackOutcome:
        """Fold one return into the buffer.

        Exact key match keeps the larger value. A neighbour closer than
        ``eps_in`` whose value differs by less than ``eps_out`` absorbs the
        experience into its running mean and centroid. Anything else becomes a
        new entry, evicting the least recently used one when full.
        """
        q = self.store._check_key(key)
        ret = float(ret)
        if not math.isfinite(ret):
            raise InputError(f"return must be finite, got {ret}")
        if not np.all(np.isfinite(q)):
            raise InputError("key contains non-finite values")
        _check_thresholds(eps_in, eps_out)
        extra = [0] * self.store.num_actions
        extra[self.action] = 1
        self.store.reserve(extra)
        evicted = np.empty(self.dim)
        info = np.zeros(9)
        K.writeback_one(*self.store._state, self.store.capacity, self.action, q, ret,
                        float(eps_in), float(eps_out), evicted, info)
        return _outcome(info, evicted, self.action)


def total_size(store: QECStore) -> int:
    return store.total_size()


# -- snapshot format ------------------------------------------------------------

_HEADER = struct.Struct("<4sIIII")
_U64 = struct.Struct("<Q")


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("key", "<f8", (dim,)), ("q", "<f8"), ("count", "<u8"),
                     ("ins", "<u8"), ("last", "<u8")])


def snapshot(store: QECStore) -> bytes:
    """Serialize ``store`` (entries in slot order) to the EPCB v1 byte format."""
    parts = [_HEADER.pack(MAGIC, VERSION, store.num_actions, store.dim, store.capacity)]
    rec = _record_dtype(store.dim)
    for a in range(store.num_actions):
        n = int(store._meta[a, K.N])
        parts.append(_U64.pack(n))
        block = np.empty(n, dtype=rec)
        block["key"] = store._keys[a, :n]
        block["q"] = store._q[a, :n]
        block["count"] = store._cnt[a, :n]
        block["ins"] = store._ins[a, :n]
        block["last"] = store._last[a, :n]
        parts.append(block.tobytes())
    return b"".join(parts)


def restore(data: bytes) -> QECStore:
    """Rebuild a store from :func:`snapshot` bytes; damaged input raises FormatError."""
    data = bytes(data)
    if len(data) < len(MAGIC):
        raise FormatError("truncated stream: missing magic", offset=len(data))
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", offset=len(data))
    _, version, num_actions, dim, capacity = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    for off, name, value in ((8, "num_actions", num_actions), (12, "key dim", dim), (16, "capacity", capacity)):
        if value < 1:
            raise FormatError(f"{name} must be >= 1", offset=off)
    rec = _record_dtype(dim)
    off = _HEADER.size
    blocks = []
    for _ in range(num_actions):
        if off + _U64.size > len(data):
            raise FormatError("truncated buffer length", offset=off)
        (n,) = _U64.unpack_from(data, off)
        if n > capacity:
            raise FormatError(f"buffer holds {n} entries but capacity is {capacity}", offset=off)
        off += _U64.size
        end = off + n * rec.itemsize
        if end > len(data):
            raise FormatError("truncated entry data", offset=len(data))
        block = np.frombuffer(data, dtype=rec, count=n, offset=off)
        bad = ~(np.isfinite(block["q"]) & np.all(np.isfinite(block["key"]), axis=1) & (block["count"] >= 1))
        if bad.any():
            raise FormatError("invalid entry", offset=off + int(np.argmax(bad)) * rec.itemsize)
        blocks.append(block)
        off = end
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", offset=off)

    store = QECStore(num_actions, dim, capacity)
    store.reserve([len(b) for b in blocks])
    keys, hsh, qv, cnt, last, ins, pdist, pivots, meta = store._state
    for a, block in enumerate(blocks):
        n = len(block)
        keys[a, :n] = block["key"]
        qv[a, :n] = block["q"]
        cnt[a, :n] = block["count"]
        ins[a, :n] = block["ins"]
        last[a, :n] = block["last"]
        meta[a, K.N] = n
        meta[a, K.TOTAL] = int(block["count"].sum())
        meta[a, K.TICK] = int(block["last"].max()) if n else 0
        meta[a, K.NEXT_INS] = int(block["ins"].max()) + 1 if n else 0
        if n >= K.PIVOT_MIN_ENTRIES:
            K.build_pivots(keys, pdist, pivots, meta, a)
    K.rehash(keys, hsh, meta)
    return store
