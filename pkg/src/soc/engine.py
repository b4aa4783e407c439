"""The online clustering loop: claim test, merge and singleton creation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BallQuery, EngineParams, Partition, SkeletonSet, as_point, row_distances
from .keys import KeySource, ext
from .topology import Topology, TopologyGraph, check_split, updated_graph

MERGED = "merged"
SINGLETON = "singleton"


@dataclass(frozen=True)
class SplitRecord:
    source_cluster_id: int
    fragments: tuple[SkeletonSet, ...]

    @property
    def fragment_ids(self) -> tuple[int, ...]:
        return tuple(S.cluster_id for S in self.fragments)


@dataclass(frozen=True)
class AssignmentEvent:
    point_index: int
    action: str
    resulting_cluster_id: int
    absorbed_cluster_ids: tuple[int, ...] = ()
    became_skeleton: bool = True
    # splits performed by the sweep that ran before this point was read
    splits: tuple[SplitRecord, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class MergeDecision:
    d_av: float
    h_un: int
    grow: bool


def merge_decision(q: BallQuery, sizes: Sequence[int], r: float, H: int) -> MergeDecision:
    """Weighted mean distance to the claimed in-ball entries and the merged size.

    ``q`` must already be restricted to the merging clusters.
    """
    W = int(q.weights.sum())
    d_av = float(np.dot(q.weights, q.dists)) / W
    h_un = min(int(sum(sizes)), H)
    return MergeDecision(d_av, h_un, d_av > r / 2 and h_un < H)


class SOCEngine:
    """Single-owner state machine clustering one stream, point by point."""

    def __init__(self, params: EngineParams, dim: int | None = None):
        self.params = params
        self.dim = dim
        self.partition = Partition()
        self.graphs: Topology | None = Topology() if params.split_enabled else None
        self.source = KeySource(params.master_seed, params.grid_delta)
        self.n_seen = 0
        self._dirty: set[int] = set()

    # main loop
    def process_point(self, x) -> AssignmentEvent:
        x = as_point(x, self.dim)
        if self.dim is None:
            self.dim = x.size
        splits = self.split_sweep() if self.graphs is not None else ()
        q = self.partition.ball(x, self.params.r)
        U = self.partition.claims(q, self.params.alpha)
        if U:
            event = self.merge(x, U, q)
        else:
            event = self.add_singleton(x)
        self.n_seen += 1
        if splits:
            event = AssignmentEvent(
                event.point_index,
                event.action,
                event.resulting_cluster_id,
                event.absorbed_cluster_ids,
                event.became_skeleton,
                tuple(splits),
            )
        return event

    def run(self, points) -> list[AssignmentEvent]:
        return [self.process_point(x) for x in points]

    # subprocedures
    def add_singleton(self, x: np.ndarray) -> AssignmentEvent:
        P = self.partition
        h = self.params.h_init
        cid = P.new_cluster_id()
        keys = self.source.draw(h, x)
        S = SkeletonSet(cid, np.broadcast_to(x, (h, x.size)).copy(), keys, np.ones(h, dtype=np.int64), P.new_entry_ids(h))
        P.add(S)
        if self.graphs is not None:
            self.graphs[cid] = TopologyGraph.complete(cid, S.ids)
        self._dirty.add(cid)
        return AssignmentEvent(self.n_seen, SINGLETON, cid, (), True)

    def merge(self, x: np.ndarray, U: Sequence[int], q: BallQuery | None = None) -> AssignmentEvent:
        """Merge ``x`` with the claiming clusters ``U`` (ascending ids).

        Key consumption order: extensions of the clusters in ``U`` order, then
        the copies of ``x``, then the growth or nearest-entry key.  In grid
        mode every key of the call comes from the stream of ``x``'s cell.
        """
        if not U:
            raise ValueError("merge needs at least one claiming cluster")
        P, prm, src = self.partition, self.params, self.source
        if q is None:
            q = P.ball(x, prm.r)
        sets = [P[c] for c in U]
        dec = merge_decision(q.restricted(U), [len(S) for S in sets], prm.r, prm.H)
        h = dec.h_un

        parts = [ext(S, h, src, anchor=x) for S in sets]
        if not dec.grow:
            parts.append(ext(x, h, src))
        keys = np.stack([p.keys for p in parts])
        win = np.argmin(keys, axis=0)  # first minimum: lowest contributor wins ties
        merged_keys = keys[win, np.arange(h)]
        first = parts[0]
        points, weights = first.points.copy(), first.weights.copy()
        ids, source_index = first.ids.copy(), first.source.copy()
        for c in range(1, len(parts)):
            m = win == c
            if m.any():
                p = parts[c]
                points[m], weights[m], ids[m], source_index[m] = p.points[m], p.weights[m], p.ids[m], p.source[m]
        fresh = ids < 0
        ids[fresh] = P.new_entry_ids(int(fresh.sum()))
        contributor = win

        x_kept = False
        bump_at = -1
        bump_key = 0.0
        if dec.grow:
            points = np.vstack([points, x[None, :]])
            merged_keys = np.append(merged_keys, src.draw(1, x))
            weights = np.append(weights, 1)
            ids = np.append(ids, P.new_entry_ids(1))
            contributor = np.append(contributor, len(sets))
            source_index = np.append(source_index, 0)
        else:
            x_kept = bool(np.any(win == len(sets)))
            if not x_kept:
                d = row_distances(points, x)
                near = np.flatnonzero(d == d.min())
                bump_at = int(near[np.argmin(ids[near])])
                bump_key = float(src.draw(1, x)[0])

        cid = U[0] if len(U) == 1 else P.new_cluster_id()
        S_new = SkeletonSet(cid, points, merged_keys, weights.astype(np.int64), ids)
        P.replace(U, S_new)
        self._dirty.difference_update(U)
        if bump_at >= 0:
            P.bump(cid, bump_at, bump_key)
        if self.graphs is not None:
            sources = [self.graphs[c] for c in U]
            updated_graph(self.graphs, x, prm.r, sources, S_new, contributor, source_index)
        self._dirty.add(cid)
        absorbed = tuple(U) if len(U) > 1 else ()
        return AssignmentEvent(self.n_seen, MERGED, cid, absorbed, dec.grow or x_kept)

    def split_sweep(self) -> list[SplitRecord]:
        """Break clusters at low-weight entries when the graph falls apart.

        Candidates are entries with weight at most half the set's mean
        weight, ordered by (weight, key); the key order picks a pseudo-random
        entry among equal weights.  At most ``split_candidates`` of them are
        tried per cluster (``None``: all).  Only clusters modified since
        their last check are visited unless ``full_sweep`` is set.
        """
        P, G, prm = self.partition, self.graphs, self.params
        todo = sorted(P.sets) if prm.full_sweep else sorted(c for c in self._dirty if c in P)
        self._dirty.clear()
        records = []
        for cid in todo:
            S = P[cid]
            h = len(S)
            cand = np.flatnonzero(2 * h * S.weights <= S.total_weight)
            if cand.size == 0:
                continue
            cand = cand[np.lexsort((S.keys[cand], S.weights[cand]))]
            if prm.split_candidates is not None:
                cand = cand[: prm.split_candidates]
            for v in cand.tolist():
                frags = check_split(G, v, prm.r, S, P)
                if frags is not None:
                    self._dirty.update(frags)
                    records.append(SplitRecord(cid, tuple(P[f] for f in frags)))
                    break
        return records

    def check(self) -> None:
        self.partition.check(self.params.H)
        if self.graphs is not None:
            self.graphs.check(self.partition)
