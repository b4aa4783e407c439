"""Neighbourhood graphs over skeleton entries and cluster splitting.

Each graph stores a dense boolean adjacency matrix aligned with the entry
order of its skeleton set, so ``graph.ids`` always mirrors ``S.ids``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _cc

from .core import Partition, SkeletonSet, row_distances


@dataclass(eq=False)
class TopologyGraph:
    cluster_id: int
    ids: np.ndarray
    adj: np.ndarray

    @classmethod
    def complete(cls, cluster_id: int, ids) -> "TopologyGraph":
        ids = np.asarray(ids, dtype=np.int64)
        adj = np.ones((len(ids), len(ids)), dtype=bool)
        np.fill_diagonal(adj, False)
        return cls(cluster_id, ids, adj)

    @classmethod
    def from_edges(cls, cluster_id: int, ids, edges: Iterable[tuple[int, int]]) -> "TopologyGraph":
        ids = np.asarray(ids, dtype=np.int64)
        where = {int(v): j for j, v in enumerate(ids.tolist())}
        adj = np.zeros((len(ids), len(ids)), dtype=bool)
        for a, b in edges:
            i, j = where[int(a)], where[int(b)]
            if i != j:
                adj[i, j] = adj[j, i] = True
        return cls(cluster_id, ids, adj)

    @property
    def vertices(self) -> set[int]:
        return set(self.ids.tolist())

    @property
    def edges(self) -> set[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adj, 1))
        a, b = self.ids[i], self.ids[j]
        return {(int(min(p, q)), int(max(p, q))) for p, q in zip(a, b)}

    def subgraph(self, cluster_id: int, index) -> "TopologyGraph":
        index = np.asarray(index)
        return TopologyGraph(cluster_id, self.ids[index], self.adj[np.ix_(index, index)])

    def check(self) -> None:
        assert self.adj.shape == (len(self.ids), len(self.ids))
        assert not self.adj.diagonal().any(), "self loop"
        assert np.array_equal(self.adj, self.adj.T), "asymmetric adjacency"


class Topology(dict):
    """The graph family: cluster id -> :class:`TopologyGraph`."""

    def check(self, P: Partition) -> None:
        assert set(self) == set(P.sets), "graph family out of sync with partition"
        for cid, g in self.items():
            g.check()
            assert np.array_equal(g.ids, P.sets[cid].ids), f"vertices of {cid} != entry ids"


def component_labels(adj: np.ndarray, mask: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Connected components of the vertices selected by ``mask`` (default: all).

    Breadth-first search on the dense matrix; cheaper than a sparse
    conversion for the near-complete graphs skeletons produce.  Components
    are numbered in order of their first vertex; unselected vertices get -1.
    """
    n = adj.shape[0]
    live = np.ones(n, dtype=bool) if mask is None else mask.copy()
    labels = np.full(n, -1, dtype=np.int64)
    k = 0
    while True:
        rest = np.flatnonzero(live)
        if rest.size == 0:
            return k, labels
        front = rest[:1]
        live[front] = False
        labels[front] = k
        while front.size:
            nb = adj[front].any(axis=0) & live
            front = np.flatnonzero(nb)
            live[front] = False
            labels[front] = k
        k += 1


def connected_components(vertices: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    """Undirected components, each sorted, ordered by their smallest vertex."""
    verts = sorted(set(int(v) for v in vertices))
    where = {v: j for j, v in enumerate(verts)}
    n = len(verts)
    if n == 0:
        return []
    rows, cols = [], []
    for a, b in edges:
        rows.append(where[int(a)])
        cols.append(where[int(b)])
    m = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, labels = _cc(m, directed=False)
    groups: dict[int, list[int]] = {}
    for v, lab in zip(verts, labels.tolist()):
        groups.setdefault(lab, []).append(v)
    return sorted(groups.values(), key=lambda g: g[0])


def updated_graph(
    G: Topology,
    x: np.ndarray,
    r: float,
    sources: Sequence[TopologyGraph],
    S_new: SkeletonSet,
    contributor: np.ndarray,
    source_index: np.ndarray,
) -> TopologyGraph:
    """Graph of a freshly merged skeleton set.

    ``contributor[j]`` says which source graph entry ``j`` of ``S_new`` came
    from (``len(sources)`` marks copies of the linking point ``x``) and
    ``source_index[j]`` which vertex of that graph it copies.  Edges are the
    source edges among survivors (a resampled duplicate inherits the edges of
    the vertex it copies and is joined to it), plus every pair inside
    ``B(x, r)`` from different sources, plus edges from copies of ``x`` to
    every entry inside ``B(x, r)``.  The sources are replaced by the result.
    """
    k = len(sources)
    h = len(S_new)
    near = np.flatnonzero(row_distances(S_new.points, x) <= r)
    if k == 1:
        # a single source is never resampled: entry j < n either is vertex j
        # or was replaced by a copy of x; anything past n is the appended x.
        # The source graph is discarded, so its matrix may be reused in place.
        g = sources[0]
        n = len(g.ids)
        replaced = np.flatnonzero(contributor[:n] != 0)
        if h == n:
            adj = g.adj
        else:
            adj = np.zeros((h, h), dtype=bool)
            adj[:n, :n] = g.adj
        if replaced.size:
            adj[replaced, :] = False
            adj[:, replaced] = False
        # only copies of x gain edges: there are no cross-source pairs
        xs = near[contributor[near] == 1]
        if xs.size:
            adj[xs[:, None], near[None, :]] = True
            adj[near[:, None], xs[None, :]] = True
            adj[xs, xs] = False
    else:
        # gather from the block-diagonal union of the sources; copies of x
        # get their own empty rows past the end
        sizes = [len(g.ids) for g in sources]
        offset = np.concatenate([[0], np.cumsum(sizes)])
        is_copy = contributor == k
        gi = np.empty(h, dtype=np.int64)
        gi[~is_copy] = offset[contributor[~is_copy]] + source_index[~is_copy]
        gi[is_copy] = offset[-1] + np.arange(int(is_copy.sum()))
        union = np.zeros((offset[-1] + int(is_copy.sum()),) * 2, dtype=bool)
        for c, g in enumerate(sources):
            union[offset[c]: offset[c + 1], offset[c]: offset[c + 1]] = g.adj
        adj = union.take(gi, 0).take(gi, 1) | (gi[:, None] == gi[None, :])
        np.fill_diagonal(adj, False)
        c = contributor[near]
        is_x = c == k
        link = (c[:, None] != c[None, :]) | is_x[:, None] | is_x[None, :]
        if link.any():
            block = np.ix_(near, near)
            sub = adj[block] | link
            np.fill_diagonal(sub, False)
            adj[block] = sub
    merged = TopologyGraph(S_new.cluster_id, S_new.ids.copy(), adj)
    for g in sources:
        G.pop(g.cluster_id, None)
    G[S_new.cluster_id] = merged
    return merged


def check_split(G: Topology, v: int, r: float, S: SkeletonSet, P: Partition) -> list[int] | None:
    """Try to break ``S`` at the entry in position ``v``.

    Entries within ``r/2`` of that entry are dropped from a working copy of
    the graph.  If the rest falls apart into several components, ``S`` is
    replaced in ``P`` and ``G`` by one cluster per component (ordered by
    smallest entry id) and the new cluster ids are returned.  Otherwise,
    including when nothing remains, nothing changes and ``None`` is returned.
    """
    g = G[S.cluster_id]
    keep = row_distances(S.points, S.points[v]) > r / 2
    if not keep.any():
        return None
    k, labels = component_labels(g.adj, keep)
    if k <= 1:
        return None
    comps = [np.flatnonzero(labels == c) for c in range(k)]
    comps.sort(key=lambda idx: int(S.ids[idx].min()))
    P.remove(S.cluster_id)
    del G[S.cluster_id]
    out = []
    for idx in comps:
        cid = P.new_cluster_id()
        P.add(S.subset(cid, idx))
        G[cid] = g.subgraph(cid, idx)
        out.append(cid)
    return out
