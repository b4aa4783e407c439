import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_set
from soc.core import (
    EngineParams,
    Partition,
    SkeletonEntry,
    SkeletonSet,
    StreamError,
    as_point,
    ball_intersection,
    claim_weight,
    distance,
)


def naive_distance(a, b):
    total = 0.0
    for u, v in zip(a, b):
        total += (u - v) * (u - v)
    return math.sqrt(total)


def test_distance_identity_and_pythagoras():
    assert distance((0, 0), (0, 0)) == 0.0
    assert distance((0, 0), (3, 4)) == 5.0


def test_distance_matches_naive_loop(rng):
    for _ in range(100):
        a, b = rng.normal(size=(2, 20))
        assert abs(distance(a, b) - naive_distance(a, b)) <= 1e-12


def test_distance_dimension_mismatch():
    with pytest.raises(StreamError):
        distance((0, 0), (0, 0, 0))


# coordinates on a 1e-6 grid: squared gaps below ~1e-308 would underflow
coord = st.integers(-10**9, 10**9).map(lambda v: v * 1e-6)


@given(st.lists(coord, min_size=1, max_size=8), st.data())
def test_distance_symmetric_and_zero_iff_equal(a, data):
    b = data.draw(st.lists(coord, min_size=len(a), max_size=len(a)))
    assert distance(a, b) == distance(b, a)
    assert (distance(a, b) == 0.0) == (a == b)


def test_as_point_rejects_bad_input():
    with pytest.raises(StreamError):
        as_point([1.0, float("nan")])
    with pytest.raises(StreamError):
        as_point([])
    with pytest.raises(StreamError):
        as_point([1.0, 2.0], dim=3)
    assert as_point([1, 2]).dtype == np.float64


def test_ball_far_set_is_empty():
    S = make_set(0, [[5.0, 5.0], [6.0, 6.0]])
    assert ball_intersection(S, [0.0, 0.0], 1.0) == []


def test_ball_zero_radius_exact_hit():
    S = make_set(0, [[0.0, 0.0], [0.5, 0.0]])
    T = ball_intersection(S, [0.5, 0.0], 0.0)
    assert [e.entry_id for e in T] == [1]


def test_ball_hand_placed_distances():
    d = [0.1, 0.2, 0.5, 0.9, 1.1]
    S = make_set(0, [[v, 0.0] for v in d])
    T = ball_intersection(S, [0.0, 0.0], 0.5)
    brute = [e for e in S.entries if naive_distance(e.point, [0.0, 0.0]) <= 0.5]
    assert [e.entry_id for e in T] == [e.entry_id for e in brute] == [0, 1, 2]


def test_ball_matches_brute_force(rng):
    for _ in range(50):
        pts = rng.random((30, 3))
        S = make_set(0, pts)
        x, r = rng.random(3), rng.random() * 0.6
        got = [e.entry_id for e in ball_intersection(S, x, r)]
        want = [e.entry_id for e in S.entries if naive_distance(e.point, x) <= r]
        assert got == want


def test_ball_negative_radius():
    with pytest.raises(ValueError):
        ball_intersection(make_set(0, [[0.0]]), [0.0], -1.0)


def test_claim_weight():
    assert claim_weight([]) == 0
    S = make_set(0, [[0.0], [1.0], [2.0]], weights=[1, 1, 3])
    assert claim_weight(S.entries) == 5


def test_claim_weight_random_subset(rng):
    w = rng.integers(1, 10, size=40)
    S = make_set(0, rng.random((40, 2)), weights=w)
    pick = rng.random(40) < 0.5
    T = [e for e, p in zip(S.entries, pick) if p]
    assert claim_weight(T) == int(w[pick].sum())


def test_skeleton_set_from_entries_roundtrip():
    entries = [SkeletonEntry(np.array([0.0, 1.0]), 0.3, 2, 7), SkeletonEntry(np.array([1.0, 1.0]), 0.4, 1, 8)]
    S = SkeletonSet.from_entries(3, entries)
    assert S.total_weight == 3
    assert [e.entry_id for e in S.entries] == [7, 8]
    S.check(max_size=2)
    with pytest.raises(AssertionError):
        S.check(max_size=1)


def test_params_validation():
    with pytest.raises(ValueError):
        EngineParams(alpha=1.0)
    with pytest.raises(ValueError):
        EngineParams(r=0.0)
    with pytest.raises(ValueError):
        EngineParams(H=2, h_init=3)
    with pytest.raises(ValueError):
        EngineParams(grid_delta=0.0)
    assert EngineParams().key_mode == "master"
    assert EngineParams(grid_delta=0.1).key_mode == "grid"


class TestPartitionIndex:
    def test_claims_match_brute_force(self, rng):
        P = Partition()
        for c in range(12):
            h = int(rng.integers(1, 6))
            P.add(make_set(c, rng.random((h, 2)), weights=rng.integers(1, 5, size=h)))
        for _ in range(200):
            x, alpha = rng.random(2), rng.random() * 0.9 + 0.05
            q = P.ball(x, 0.2)
            want = sorted(
                cid for cid, S in P.sets.items()
                if claim_weight(ball_intersection(S, x, 0.2)) >= alpha * S.total_weight
                and ball_intersection(S, x, 0.2)
            )
            assert P.claims(q, alpha) == want

    def test_replace_remove_and_compaction_keep_index_coherent(self, rng):
        P = Partition()
        for c in range(20):
            P.add(make_set(c, rng.random((int(rng.integers(1, 8)), 2))))
        P.check()
        nxt = 20
        for _ in range(300):
            live = sorted(P.sets)
            k = int(rng.integers(1, min(3, len(live)) + 1))
            old = list(rng.choice(live, size=k, replace=False))
            h = int(rng.integers(1, 15))
            P.replace(old, make_set(nxt, rng.random((h, 2))))
            nxt += 1
            if rng.random() < 0.3:
                P.add(make_set(nxt, rng.random((1, 2))))
                nxt += 1
            P.check()
        x = rng.random(2)
        q = P.ball(x, 0.3)
        for cid, pos, d in zip(q.cluster_ids, q.positions, q.dists):
            assert abs(naive_distance(P[cid].points[pos], x) - d) < 1e-12

    def test_bump_updates_weight_and_key(self):
        P = Partition()
        P.add(make_set(0, [[0.0], [1.0]], keys=[0.5, 0.5]))
        P.bump(0, 1, 0.25)
        P.bump(0, 1, 0.75)
        assert P[0].weights.tolist() == [1, 3]
        assert P[0].keys.tolist() == [0.5, 0.25]
        assert P[0].total_weight == 4
        P.check()

    def test_duplicate_cluster_id_rejected(self):
        P = Partition()
        P.add(make_set(0, [[0.0]]))
        with pytest.raises(KeyError):
            P.add(make_set(0, [[1.0]]))

    def test_dimension_drift_rejected(self):
        P = Partition()
        P.add(make_set(0, [[0.0, 0.0]]))
        with pytest.raises(StreamError):
            P.add(make_set(1, [[0.0]]))

    def test_empty_partition_ball(self):
        P = Partition()
        q = P.ball(np.zeros(3), 1.0)
        assert q.cluster_ids.size == 0 and P.claims(q, 0.5) == []

    def test_ids_are_fresh(self):
        P = Partition()
        a = [P.new_cluster_id() for _ in range(3)]
        assert a == [0, 1, 2]
        assert P.new_entry_ids(3).tolist() == [0, 1, 2]
        assert P.new_entry_ids(2).tolist() == [3, 4]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_snapshot_is_independent_copy(seed):
    rng = np.random.default_rng(seed)
    P = Partition()
    P.add(make_set(0, rng.random((3, 2))))
    snap = P.snapshot()
    P.bump(0, 0, 0.0)
    assert snap[0].weights.tolist() == [1, 1, 1]
    snap.check()
