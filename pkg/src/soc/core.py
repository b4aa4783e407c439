"""Data model shared by every part of the engine: points, skeleton entries,
skeleton sets, the partition of live clusters and the Euclidean ball queries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class StreamError(ValueError):
    """Malformed stream input (bad dimensionality, non-finite coordinates)."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a 1-D float64 array and validate it."""
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise StreamError(f"point must be a non-empty vector, got shape {p.shape}")
    if dim is not None and p.size != dim:
        raise StreamError(f"dimension mismatch: expected {dim}, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise StreamError("point has non-finite coordinates")
    return p


def row_distances(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean distance from every row of ``points`` to ``x``.

    Every distance in the package goes through this function so that the
    scalar and vectorised paths agree bit for bit.
    """
    d = points - x
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StreamError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(row_distances(a[None, :], b)[0])


@dataclass(frozen=True)
class SkeletonEntry:
    point: np.ndarray
    key: float
    weight: int
    entry_id: int


@dataclass(eq=False)
class SkeletonSet:
    """One cluster's skeleton, stored column-wise.

    Row ``j`` of ``points`` together with ``keys[j]``, ``weights[j]`` and
    ``ids[j]`` is the ``j``-th entry.  ``total_weight`` is a cache of
    ``weights.sum()``.
    """

    cluster_id: int
    points: np.ndarray
    keys: np.ndarray
    weights: np.ndarray
    ids: np.ndarray
    total_weight: int = -1

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[None, :]
        self.keys = np.asarray(self.keys, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.total_weight < 0:
            self.total_weight = int(self.weights.sum())

    @classmethod
    def from_entries(cls, cluster_id: int, entries: Sequence[SkeletonEntry]) -> "SkeletonSet":
        return cls(
            cluster_id,
            np.stack([np.asarray(e.point, dtype=np.float64) for e in entries]),
            [e.key for e in entries],
            [e.weight for e in entries],
            [e.entry_id for e in entries],
        )

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def entries(self) -> list[SkeletonEntry]:
        return [
            SkeletonEntry(self.points[j], float(self.keys[j]), int(self.weights[j]), int(self.ids[j]))
            for j in range(len(self))
        ]

    def subset(self, cluster_id: int, mask_or_index) -> "SkeletonSet":
        return SkeletonSet(
            cluster_id,
            self.points[mask_or_index],
            self.keys[mask_or_index],
            self.weights[mask_or_index],
            self.ids[mask_or_index],
        )

    def copy(self) -> "SkeletonSet":
        return SkeletonSet(
            self.cluster_id,
            self.points.copy(),
            self.keys.copy(),
            self.weights.copy(),
            self.ids.copy(),
            self.total_weight,
        )

    def check(self, max_size: int | None = None) -> None:
        """Raise ``AssertionError`` if any structural invariant is broken."""
        h = len(self)
        assert h >= 1, "empty skeleton set"
        assert max_size is None or h <= max_size, f"skeleton size {h} > {max_size}"
        assert self.points.shape[0] == h and self.weights.shape == (h,) and self.ids.shape == (h,)
        assert np.all(self.weights >= 1), "weight below 1"
        assert np.all((self.keys >= 0.0) & (self.keys < 1.0)), "key outside [0,1)"
        assert self.total_weight == int(self.weights.sum()), "stale total_weight"
        assert len(np.unique(self.ids)) == h, "duplicate entry ids"


def ball_intersection(S: SkeletonSet, x, r: float) -> list[SkeletonEntry]:
    """Entries of ``S`` within the closed ball ``B(x, r)``, in entry order."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (S.dim,):
        raise StreamError(f"dimension mismatch: expected {S.dim}, got {x.shape}")
    inside = np.flatnonzero(row_distances(S.points, x) <= r)
    entries = S.entries
    return [entries[j] for j in inside]


def claim_weight(T: Iterable[SkeletonEntry]) -> int:
    return sum(e.weight for e in T)


@dataclass
class EngineParams:
    r: float = 0.07
    alpha: float = 0.03
    H: int = 400
    h_init: int = 1
    split_enabled: bool = True
    grid_delta: float | None = None
    master_seed: int = 0
    # Split sweep: re-check only clusters modified since their last check
    # unless full_sweep is set.
    full_sweep: bool = False
    # Breaking-point candidates tried per cluster and sweep (None: all).
    split_candidates: int | None = 1

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.H < 1 or self.h_init < 1 or self.h_init > self.H:
            raise ValueError("need 1 <= h_init <= H")
        if self.grid_delta is not None and not self.grid_delta > 0:
            raise ValueError("grid_delta must be positive")
        if self.split_candidates is not None and self.split_candidates < 1:
            raise ValueError("split_candidates must be >= 1")

    @property
    def key_mode(self) -> str:
        return "master" if self.grid_delta is None else "grid"

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "alpha": self.alpha,
            "H": self.H,
            "h_init": self.h_init,
            "split_enabled": self.split_enabled,
            "grid_delta": self.grid_delta,
            "master_seed": self.master_seed,
            "full_sweep": self.full_sweep,
            "split_candidates": self.split_candidates,
        }


_FAR = 1e100  # coordinate written into dead index rows; never inside any ball


@dataclass
class BallQuery:
    """Result of a ball query against the whole partition."""

    cluster_ids: np.ndarray  # owning cluster of every in-ball entry
    positions: np.ndarray  # entry position within its skeleton set
    dists: np.ndarray
    weights: np.ndarray
    slots: np.ndarray | None = None

    def restricted(self, cluster_ids: Sequence[int]) -> "BallQuery":
        """In-ball entries of the given clusters, ordered by (cluster, position)."""
        if len(cluster_ids) == 1:
            idx = np.flatnonzero(self.cluster_ids == cluster_ids[0])
            idx = idx[np.argsort(self.positions[idx], kind="stable")]
        else:
            idx = np.flatnonzero(np.isin(self.cluster_ids, np.asarray(cluster_ids, dtype=np.int64)))
            idx = idx[np.lexsort((self.positions[idx], self.cluster_ids[idx]))]
        return BallQuery(self.cluster_ids[idx], self.positions[idx], self.dists[idx], self.weights[idx])


@dataclass
class Partition:
    """The live skeleton sets, keyed by cluster id.

    Besides the sets themselves the partition keeps a flat row index of every
    entry (coordinates, weight, owning slot) so that one vectorised pass
    answers a ball query against all clusters at once.  Ball queries are a
    linear scan; a spatial index could replace ``_X`` without changing the
    interface.
    """

    sets: dict[int, SkeletonSet] = field(default_factory=dict)
    next_cluster_id: int = 0
    next_entry_id: int = 0

    def __post_init__(self):
        self._dim: int | None = None
        self._rows: dict[int, np.ndarray] = {}
        self._top = 0
        self._dead = 0
        self._X = np.empty((0, 0))
        self._w = np.empty(0)
        self._slot = np.empty(0, dtype=np.int64)
        self._pos = np.empty(0, dtype=np.int64)
        # one slot per live cluster; slot arrays feed bincount in claims()
        self._slot_of: dict[int, int] = {}
        self._slot_cid = np.full(16, -1, dtype=np.int64)
        self._slot_total = np.zeros(16)
        self._free_slots: list[int] = list(range(15, -1, -1))
        pending = list(self.sets.values())
        self.sets = {}
        for S in pending:
            self.add(S)

    # identifiers
    def new_cluster_id(self) -> int:
        cid = self.next_cluster_id
        self.next_cluster_id += 1
        return cid

    def new_entry_ids(self, n: int) -> np.ndarray:
        start = self.next_entry_id
        self.next_entry_id += n
        return np.arange(start, start + n, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.sets)

    def __contains__(self, cid) -> bool:
        return cid in self.sets

    def __getitem__(self, cid) -> SkeletonSet:
        return self.sets[cid]

    @property
    def dim(self) -> int | None:
        return self._dim

    # index maintenance
    def _reserve(self, n: int) -> None:
        """Make room for ``n`` rows past ``_top``; may compact (renumbering rows)."""
        cap = self._X.shape[0]
        if self._top + n <= cap:
            return
        if self._dead * 2 >= self._top:
            self._compact()
            if self._top + n <= cap:
                return
        new_cap = max(64, 2 * cap, self._top + n)
        X = np.full((new_cap, self._dim), _FAR)
        X[: self._top] = self._X[: self._top]
        w = np.zeros(new_cap)
        w[: self._top] = self._w[: self._top]
        slot = np.zeros(new_cap, dtype=np.int64)
        slot[: self._top] = self._slot[: self._top]
        pos = np.zeros(new_cap, dtype=np.int64)
        pos[: self._top] = self._pos[: self._top]
        self._X, self._w, self._slot, self._pos = X, w, slot, pos

    def _compact(self) -> None:
        live = [(cid, self._rows[cid]) for cid in self.sets]
        old = self._X, self._w, self._slot, self._pos
        cap = self._X.shape[0]
        self._X = np.full((cap, self._dim), _FAR)
        self._w = np.zeros(cap)
        self._slot = np.zeros(cap, dtype=np.int64)
        self._pos = np.zeros(cap, dtype=np.int64)
        top = 0
        for cid, rows in live:
            new = np.arange(top, top + len(rows))
            for dst, src in zip((self._X, self._w, self._slot, self._pos), old):
                dst[new] = src[rows]
            self._rows[cid] = new
            top += len(rows)
        self._top = top
        self._dead = 0

    def _take_slot(self, cid: int, total: int) -> int:
        if not self._free_slots:
            n = len(self._slot_cid)
            self._slot_cid = np.concatenate([self._slot_cid, np.full(n, -1, dtype=np.int64)])
            self._slot_total = np.concatenate([self._slot_total, np.zeros(n)])
            self._free_slots = list(range(2 * n - 1, n - 1, -1))
        slot = self._free_slots.pop()
        self._slot_of[cid] = slot
        self._slot_cid[slot] = cid
        self._slot_total[slot] = total
        return slot

    def add(self, S: SkeletonSet) -> None:
        self.replace((), S)

    def replace(self, old: Sequence[int], S: SkeletonSet) -> None:
        """Remove the clusters ``old`` and add ``S``, reusing their index rows."""
        if S.cluster_id in self.sets and S.cluster_id not in old:
            raise KeyError(f"cluster id {S.cluster_id} already present")
        if self._dim is None:
            self._dim = S.dim
            self._X = np.empty((0, self._dim))
        elif S.dim != self._dim:
            raise StreamError(f"dimension mismatch: expected {self._dim}, got {S.dim}")
        h = len(S)
        n_free = sum(len(self._rows[c]) for c in old)
        self._reserve(max(0, h - n_free))
        freed = [self._rows[c] for c in old]
        for c in old:
            self.remove(c)
        rows = np.concatenate(freed)[:h] if freed else np.empty(0, dtype=np.int64)
        self._dead -= len(rows)
        if len(rows) < h:
            extra = h - len(rows)
            rows = np.concatenate([rows, np.arange(self._top, self._top + extra)])
            self._top += extra
        slot = self._take_slot(S.cluster_id, S.total_weight)
        self._X[rows] = S.points
        self._w[rows] = S.weights
        self._slot[rows] = slot
        self._pos[rows] = np.arange(h)
        self._rows[S.cluster_id] = rows
        self.sets[S.cluster_id] = S
        self.next_cluster_id = max(self.next_cluster_id, S.cluster_id + 1)
        if h:
            self.next_entry_id = max(self.next_entry_id, int(S.ids.max()) + 1)

    def remove(self, cid: int) -> SkeletonSet:
        S = self.sets.pop(cid)
        rows = self._rows.pop(cid)
        self._X[rows] = _FAR
        self._w[rows] = 0.0
        self._dead += len(rows)
        slot = self._slot_of.pop(cid)
        self._slot_cid[slot] = -1
        self._slot_total[slot] = 0.0
        self._free_slots.append(slot)
        return S

    def bump(self, cid: int, pos: int, key: float) -> None:
        """Add one unit of weight to an entry and lower its key to ``key`` if smaller."""
        S = self.sets[cid]
        S.weights[pos] += 1
        S.total_weight += 1
        if key < S.keys[pos]:
            S.keys[pos] = key
        self._w[self._rows[cid][pos]] += 1.0
        self._slot_total[self._slot_of[cid]] += 1.0

    # queries
    def ball(self, x: np.ndarray, r: float) -> BallQuery:
        if self._top == 0:
            e = np.empty(0, dtype=np.int64)
            return BallQuery(e, e, np.empty(0), e, e)
        d = row_distances(self._X[: self._top], x)
        rows = np.flatnonzero(d <= r)
        slots = self._slot[rows]
        return BallQuery(
            self._slot_cid[slots],
            self._pos[rows],
            d[rows],
            self._w[rows].astype(np.int64),
            slots,
        )

    def claims(self, q: BallQuery, alpha: float) -> list[int]:
        """Cluster ids, ascending, whose in-ball weight is at least ``alpha`` times their total."""
        if q.cluster_ids.size == 0:
            return []
        claimed = np.bincount(q.slots, weights=q.weights, minlength=len(self._slot_total))
        hit = np.flatnonzero((claimed > 0) & (claimed >= alpha * self._slot_total))
        return sorted(self._slot_cid[hit].tolist())

    def snapshot(self) -> "Partition":
        return Partition(
            {cid: S.copy() for cid, S in self.sets.items()},
            self.next_cluster_id,
            self.next_entry_id,
        )

    def check(self, max_size: int | None = None) -> None:
        for cid, S in self.sets.items():
            assert S.cluster_id == cid
            S.check(max_size)
            rows = self._rows[cid]
            assert np.array_equal(self._X[rows], S.points)
            assert np.array_equal(self._w[rows], S.weights.astype(np.float64))
            slot = self._slot_of[cid]
            assert np.all(self._slot[rows] == slot) and self._slot_cid[slot] == cid
            assert self._slot_total[slot] == S.total_weight
