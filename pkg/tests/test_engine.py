import numpy as np
import pytest

from conftest import engine_with, make_set
from oracles import random_partition, reference_merge
from soc.core import EngineParams, StreamError
from soc.engine import MERGED, SINGLETON, SOCEngine, merge_decision
from soc.keys import KeySource


def test_first_point_is_singleton():
    eng = SOCEngine(EngineParams())
    ev = eng.process_point([1.0, 2.0])
    assert ev.action == SINGLETON and ev.absorbed_cluster_ids == () and ev.became_skeleton
    (S,) = eng.partition.sets.values()
    assert len(S) == 1 and S.weights.tolist() == [1] and S.points.tolist() == [[1.0, 2.0]]


def test_far_point_opens_new_cluster():
    eng = SOCEngine(EngineParams(r=0.1))
    a = eng.process_point([0.0, 0.0])
    b = eng.process_point([5.0, 5.0])
    assert b.action == SINGLETON and a.resulting_cluster_id != b.resulting_cluster_id
    assert len(eng.partition) == 2


def test_h_init_copies():
    eng = SOCEngine(EngineParams(h_init=3))
    eng.process_point([1.0, 2.0])
    (S,) = eng.partition.sets.values()
    assert len(S) == 3 and S.weights.tolist() == [1, 1, 1]
    assert np.all(S.points == [1.0, 2.0]) and len(set(S.keys.tolist())) == 3
    eng.check()


def test_two_singletons_both_claim_and_merge():
    eng = SOCEngine(EngineParams(r=0.2, alpha=0.5))
    eng.add_singleton(np.array([0.0, 0.0]))
    eng.add_singleton(np.array([0.1, 0.0]))
    ev = eng.process_point([0.05, 0.0])
    assert ev.action == MERGED and ev.absorbed_cluster_ids == (0, 1)
    assert len(eng.partition) == 1 and ev.resulting_cluster_id not in (0, 1)
    eng.check()


def test_dense_neighbourhood_bumps_nearest_entry():
    # incumbents hold key 0, so every copy of x loses its argmin
    S = make_set(0, [[0.0, 0.0], [0.01, 0.0]], keys=[0.0, 0.0], ids=[0, 1])
    eng = engine_with([S], r=0.2, alpha=0.5)
    ev = eng.process_point([0.002, 0.0])
    out = eng.partition[0]
    assert ev.action == MERGED and ev.resulting_cluster_id == 0 and not ev.became_skeleton
    assert out.points.tolist() == [[0.0, 0.0], [0.01, 0.0]]
    assert out.weights.tolist() == [2, 1] and out.keys.tolist() == [0.0, 0.0]
    assert len(out) == 2


def test_equidistant_bump_goes_to_smallest_entry_id():
    S = make_set(0, [[0.01, 0.0], [-0.01, 0.0]], keys=[0.0, 0.0], ids=[9, 4])
    eng = engine_with([S], r=0.2, alpha=0.5)
    eng.process_point([0.0, 0.0])
    assert eng.partition[0].weights.tolist() == [1, 2]


def test_sparse_neighbourhood_appends_x():
    S = make_set(0, [[0.0, 0.0]], keys=[0.5])
    eng = engine_with([S], r=0.2, alpha=0.5)
    ev = eng.process_point([0.15, 0.0])
    out = eng.partition[0]
    assert ev.became_skeleton and len(out) == 2
    assert out.points[-1].tolist() == [0.15, 0.0] and out.weights[-1] == 1


def test_h_un_capped_at_H():
    A = make_set(0, [[0.0, 0.0], [0.01, 0.0], [0.02, 0.0]])
    B = make_set(1, [[0.03, 0.0], [0.04, 0.0]])
    eng = engine_with([A, B], r=0.5, alpha=0.1, H=4)
    q = eng.partition.ball(np.array([0.02, 0.0]), 0.5)
    dec = merge_decision(q.restricted([0, 1]), [3, 2], 0.5, 4)
    assert dec.h_un == 4 and not dec.grow
    eng.merge(np.array([0.02, 0.0]), [0, 1])
    (out,) = eng.partition.sets.values()
    assert len(out) == 4
    eng.check()


def test_merge_decision_growth_rule():
    S = make_set(0, [[0.0], [0.09]], weights=[1, 3])
    eng = engine_with([S], r=0.1, alpha=0.1)
    q = eng.partition.ball(np.array([0.0]), 0.1).restricted([0])
    dec = merge_decision(q, [2], 0.1, 400)
    assert dec.d_av == pytest.approx((0 * 1 + 0.09 * 3) / 4)
    assert dec.grow is True
    assert merge_decision(q, [2], 0.1, 2).grow is False


def test_merge_requires_claimants():
    eng = SOCEngine(EngineParams(), dim=1)
    with pytest.raises(ValueError):
        eng.merge(np.zeros(1), [])


def test_dimension_drift_raises():
    eng = SOCEngine(EngineParams())
    eng.process_point([0.0, 0.0])
    with pytest.raises(StreamError):
        eng.process_point([0.0, 0.0, 0.0])


@pytest.mark.parametrize("grid", [None, 0.1])
def test_merge_matches_reference(grid):
    rng = np.random.default_rng(4)
    done = 0
    for trial in range(400):
        sets, _ = random_partition(rng)
        r = float(rng.uniform(0.02, 0.3))
        H = int(rng.integers(2, 12))
        if max(len(S) for S in sets) > H:
            continue
        eng = engine_with(sets, r=r, alpha=float(rng.uniform(0.01, 0.9)), H=H, grid_delta=grid,
                          master_seed=trial, split_enabled=bool(trial % 2))
        x = rng.random(2) * 0.3
        q = eng.partition.ball(x, r)
        U = eng.partition.claims(q, eng.params.alpha)
        if not U:
            continue
        clone = KeySource.from_state(eng.source.state())
        want, grow, _, _, _ = reference_merge([eng.partition[c] for c in U], x, r, H, clone,
                                              eng.partition.next_entry_id)
        ev = eng.merge(x, U, q)
        got = eng.partition[ev.resulting_cluster_id]
        assert [tuple(p) for p in got.points.tolist()] == [tuple(np.asarray(e[0]).tolist()) for e in want]
        assert got.keys.tolist() == [e[1] for e in want]
        assert got.weights.tolist() == [e[2] for e in want]
        assert got.ids.tolist() == [e[3] for e in want]
        assert eng.source.digest() == clone.digest()
        eng.check()
        done += 1
    assert done > 100


def test_cluster_ids_never_reused():
    rng = np.random.default_rng(0)
    eng = SOCEngine(EngineParams(r=0.15))
    seen, live = set(), set()
    for x in rng.random((800, 2)):
        ev = eng.process_point(x)
        new = set(eng.partition.sets) - live
        assert not (new & seen)
        seen |= new
        live = set(eng.partition.sets)


def test_event_sequence_is_deterministic():
    X = np.random.default_rng(1).random((500, 3))
    a = SOCEngine(EngineParams(r=0.2, master_seed=3)).run(X)
    b = SOCEngine(EngineParams(r=0.2, master_seed=3)).run(X)
    assert a == b
    ea, ec = SOCEngine(EngineParams(r=0.2, master_seed=3)), SOCEngine(EngineParams(r=0.2, master_seed=4))
    ea.run(X)
    ec.run(X)
    ka = np.concatenate([S.keys for S in ea.partition.sets.values()])
    kc = np.concatenate([S.keys for S in ec.partition.sets.values()])
    assert not np.array_equal(ka, kc)


def test_merge_only_variant_keeps_no_graphs():
    eng = SOCEngine(EngineParams(split_enabled=False, r=0.2))
    events = eng.run(np.random.default_rng(2).random((300, 2)))
    assert eng.graphs is None
    assert all(ev.splits == () for ev in events)
