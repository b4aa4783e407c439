"""Purity, wrong-merge audit, throughput and the Leader-Follower baseline."""
from __future__ import annotations

import csv
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import EngineParams, row_distances
from .engine import MERGED, SINGLETON, AssignmentEvent, SOCEngine

TRAJECTORY_EVERY = 100


def purity(assignments: Sequence, labels: Sequence, exclude_outliers: bool = False) -> float:
    """Unweighted mean over clusters of the dominant-label fraction.

    The outlier label ``-1`` is an ordinary label unless ``exclude_outliers``
    drops outlier points before the clusters are formed.
    """
    a = np.asarray(assignments)
    y = np.asarray(labels)
    if a.shape != y.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {y.shape}")
    if exclude_outliers:
        keep = y != -1
        a, y = a[keep], y[keep]
    if a.size == 0:
        raise ValueError("purity of an empty clustering is undefined")
    _, ai = np.unique(a, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((ai.max() + 1, yi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, yi), 1)
    return float(np.mean(table.max(axis=1) / table.sum(axis=1)))


@dataclass(frozen=True)
class WrongMergeAudit:
    core_mixing: int  # clusters holding points of two or more cores
    core_spread: int  # cores whose points sit in two or more clusters

    def __int__(self) -> int:
        return self.core_mixing


def wrong_merge_audit(membership: Sequence, labels: Sequence) -> WrongMergeAudit:
    """Both sides of the error: clusters mixing cores, cores split across clusters.

    Outlier points (label ``-1``) are ignored.
    """
    a = np.asarray(membership)
    y = np.asarray(labels)
    if a.shape != y.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {y.shape}")
    core = y != -1
    pairs = set(zip(a[core].tolist(), y[core].tolist()))
    per_cluster = Counter(c for c, _ in pairs)
    per_label = Counter(l for _, l in pairs)
    return WrongMergeAudit(
        sum(1 for n in per_cluster.values() if n >= 2),
        sum(1 for n in per_label.values() if n >= 2),
    )


class MembershipTracker:
    """Follows every point through merges and splits to its current cluster.

    Merged clusters pool their members.  When a cluster splits, each member
    goes to the fragment holding its nearest skeleton entry.  Memory grows
    with the stream; this is an evaluation aid, not part of the engine.
    """

    def __init__(self, labels: Sequence[int] | None = None):
        self.labels = None if labels is None else np.asarray(labels)
        self.members: dict[int, list[int]] = {}
        self.coords: list[np.ndarray] = []
        # label -> {cluster id: count}, core labels only
        self._by_label: dict[int, Counter] = {}

    def _label(self, i: int) -> int | None:
        if self.labels is None:
            return None
        lab = int(self.labels[i])
        return None if lab == -1 else lab

    def _add(self, cid: int, idx: Iterable[int]) -> None:
        self.members.setdefault(cid, []).extend(idx)
        if self.labels is not None:
            for i in idx:
                lab = self._label(i)
                if lab is not None:
                    self._by_label.setdefault(lab, Counter())[cid] += 1

    def _drop(self, cid: int) -> list[int]:
        idx = self.members.pop(cid, [])
        if self.labels is not None:
            for cnt in self._by_label.values():
                cnt.pop(cid, None)
        return idx

    def observe(self, x, event: AssignmentEvent) -> None:
        i = event.point_index
        if i != len(self.coords):
            raise ValueError(f"expected point {len(self.coords)}, got {i}")
        self.coords.append(np.asarray(x, dtype=np.float64))
        for rec in event.splits:
            self._split(rec)
        cid = event.resulting_cluster_id
        if event.action == SINGLETON:
            self._add(cid, [i])
        elif event.action == MERGED:
            pooled = []
            for c in event.absorbed_cluster_ids:
                pooled.extend(self._drop(c))
            self._add(cid, pooled + [i])
        else:
            raise ValueError(f"unknown action {event.action!r}")

    def _split(self, rec) -> None:
        idx = self._drop(rec.source_cluster_id)
        if not idx:
            return
        pts = np.stack([self.coords[i] for i in idx])
        best = np.full(len(idx), np.inf)
        owner = np.zeros(len(idx), dtype=np.int64)
        for f, S in enumerate(rec.fragments):
            for p in S.points:
                d = row_distances(pts, p)
                closer = d < best
                best[closer] = d[closer]
                owner[closer] = f
        for f, S in enumerate(rec.fragments):
            self._add(S.cluster_id, [idx[j] for j in np.flatnonzero(owner == f)])

    def membership(self) -> np.ndarray:
        out = np.full(len(self.coords), -1, dtype=np.int64)
        for cid, idx in self.members.items():
            out[idx] = cid
        return out

    def clusters_with_label(self, label: int) -> int:
        return sum(1 for n in self._by_label.get(label, {}).values() if n > 0)

    def state(self) -> dict:
        return {str(c): list(v) for c, v in sorted(self.members.items())}

    def load_state(self, members: dict, coords: Sequence) -> None:
        self.coords = [np.asarray(c, dtype=np.float64) for c in coords]
        self.members = {}
        self._by_label = {}
        for c, idx in members.items():
            self._add(int(c), list(idx))


def leader_follower(points, threshold: float) -> np.ndarray:
    """One centre per cluster: join the nearest centre within ``threshold``
    (and move it to the running mean), otherwise open a new cluster."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    X = np.asarray(points, dtype=np.float64)
    n, dim = X.shape
    centers = np.empty((16, dim))
    counts = np.zeros(16, dtype=np.int64)
    k = 0
    out = np.empty(n, dtype=np.int64)
    for i, x in enumerate(X):
        if k:
            d = row_distances(centers[:k], x)
            j = int(np.argmin(d))
            if d[j] <= threshold:
                counts[j] += 1
                centers[j] += (x - centers[j]) / counts[j]
                out[i] = j
                continue
        if k == len(counts):
            centers = np.vstack([centers, np.empty_like(centers)])
            counts = np.concatenate([counts, np.zeros_like(counts)])
        centers[k] = x
        counts[k] = 1
        out[i] = k
        k += 1
    return out


@dataclass
class RunResult:
    events: list[AssignmentEvent]
    membership: np.ndarray
    seconds: float
    max_skeleton: int
    trajectory: list[tuple[int, int]]
    engine: SOCEngine

    @property
    def micros_per_point(self) -> float:
        return 1e6 * self.seconds / max(len(self.events), 1)


def run_engine(X, params: EngineParams, labels=None, track: bool = True) -> RunResult:
    """Cluster ``X`` and collect membership, timing and the cluster-count trajectory.

    Only the engine's own calls are timed.
    """
    X = np.asarray(X, dtype=np.float64)
    eng = SOCEngine(params, dim=X.shape[1] if X.ndim == 2 and len(X) else None)
    tracker = MembershipTracker(labels) if track else None
    events = []
    traj = []
    max_h = 0
    elapsed = 0.0
    for i, x in enumerate(X):
        t0 = time.perf_counter()
        ev = eng.process_point(x)
        elapsed += time.perf_counter() - t0
        events.append(ev)
        if tracker is not None:
            tracker.observe(x, ev)
        max_h = max(max_h, len(eng.partition[ev.resulting_cluster_id]))
        if (i + 1) % TRAJECTORY_EVERY == 0:
            traj.append((i + 1, len(eng.partition)))
    if len(X) % TRAJECTORY_EVERY:
        traj.append((len(X), len(eng.partition)))
    membership = tracker.membership() if tracker is not None else np.array([e.resulting_cluster_id for e in events])
    return RunResult(events, membership, elapsed, max_h, traj, eng)


def throughput(X, params: EngineParams) -> float:
    """Engine wall-clock microseconds per point (no generation, no IO)."""
    return run_engine(X, params, track=False).micros_per_point


@dataclass
class RunReport:
    purity: float
    purity_core_only: float | None
    n_clusters_over_time: list[tuple[int, int]]
    wrong_merge_count: int
    core_spread_count: int
    micros_per_point: float | None
    params_echo: dict
    n_points: int
    n_clusters: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_clusters_over_time"] = [list(t) for t in self.n_clusters_over_time]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_trajectory_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point_index", "n_clusters"])
            w.writerows(self.n_clusters_over_time)


def build_report(membership, labels, params: dict, trajectory=None, micros_per_point=None, extra=None) -> RunReport:
    membership = np.asarray(membership)
    labels = np.asarray(labels)
    audit = wrong_merge_audit(membership, labels)
    core = labels != -1
    if trajectory is None:
        trajectory = cluster_count_trajectory(membership)
    return RunReport(
        purity=purity(membership, labels),
        purity_core_only=purity(membership, labels, exclude_outliers=True) if core.any() else None,
        n_clusters_over_time=list(trajectory),
        wrong_merge_count=audit.core_mixing,
        core_spread_count=audit.core_spread,
        micros_per_point=micros_per_point,
        params_echo=dict(params),
        n_points=int(len(membership)),
        n_clusters=int(len(np.unique(membership))),
        extra=dict(extra or {}),
    )


def cluster_count_trajectory(assigned_ids: Sequence) -> list[tuple[int, int]]:
    """Distinct assigned cluster ids among the first ``t`` points, every 100 points.

    Used when only an assignment file is available; a live run records the
    number of clusters held by the engine instead.
    """
    seen: set = set()
    out = []
    ids = list(assigned_ids)
    for i, c in enumerate(ids):
        seen.add(c)
        if (i + 1) % TRAJECTORY_EVERY == 0:
            out.append((i + 1, len(seen)))
    if ids and len(ids) % TRAJECTORY_EVERY:
        out.append((len(ids), len(seen)))
    return out
