import math

import numpy as np
import pytest
from scipy import stats

from conftest import make_set
from soc.keys import KeySource, cell_id, cell_seed, ext, mix64, stream_values

ALPHA = 0.01


def test_cell_id_floor():
    assert cell_id((0.05, 0.05), 0.1) == (0, 0)
    assert cell_id((-0.01, 0.25), 0.1) == (-1, 2)
    with pytest.raises(ValueError):
        cell_id((0.0,), 0.0)


def test_cell_id_equality_matches_floors(rng):
    X = rng.uniform(-1, 1, size=(1000, 3))
    ids = [cell_id(x, 0.25) for x in X]
    floors = [tuple(int(math.floor(c / 0.25)) for c in x) for x in X]
    for i in range(0, 1000, 7):
        for j in range(1, 1000, 13):
            assert (ids[i] == ids[j]) == (floors[i] == floors[j])


def test_scalar_and_vector_stream_paths_agree():
    seed = mix64(99)
    many = stream_values(seed, 5, 10)
    ones = np.concatenate([stream_values(seed, 5 + i, 1) for i in range(10)])
    assert np.array_equal(many, ones)


def test_master_determinism():
    a, b = KeySource(7), KeySource(7)
    xs = [a.next_key() for _ in range(50)]
    assert xs == [b.next_key() for _ in range(50)]
    assert KeySource(8).next_key() != xs[0]


def test_keys_in_unit_interval():
    k = KeySource(3).draw(10_000)
    assert k.min() >= 0.0 and k.max() < 1.0


def test_ks_uniformity():
    keys = KeySource(2024).draw(100_000)
    assert stats.kstest(keys, "uniform").pvalue > ALPHA


def test_grid_same_cell_shares_stream():
    src = KeySource(1, grid_delta=0.1)
    k1 = src.next_key((0.01, 0.01))
    k2 = src.next_key((0.09, 0.02))
    assert k1 != k2
    ref = KeySource(1, grid_delta=0.1)
    assert ref.draw(2, (0.05, 0.05)).tolist() == [k1, k2]
    assert src.cells[(0, 0)][1] == 2


def test_grid_different_cells_independent_streams():
    src = KeySource(1, grid_delta=0.1)
    a = src.draw(5, (0.05, 0.05))
    b = src.draw(5, (0.55, 0.05))
    assert not np.array_equal(a, b)
    # a cell's stream does not depend on other cells having been used
    assert np.array_equal(KeySource(1, grid_delta=0.1).draw(5, (0.55, 0.05)), b)
    assert cell_seed(1, (0, 0)) != cell_seed(1, (5, 0))


def test_grid_mode_needs_anchor():
    with pytest.raises(ValueError):
        KeySource(0, grid_delta=0.5).draw(1)


def test_state_roundtrip():
    src = KeySource(5, grid_delta=0.2)
    src.draw(3, (0.1, 0.1))
    src.draw(2, (-0.3, 0.1))
    clone = KeySource.from_state(src.state())
    assert clone.digest() == src.digest()
    assert np.array_equal(clone.draw(4, (0.1, 0.1)), src.draw(4, (0.1, 0.1)))


def test_ext_singleton():
    e = ext(np.array([1.0, 2.0]), 3, KeySource(0))
    assert len(e) == 3
    assert np.all(e.points == [1.0, 2.0])
    assert e.weights.tolist() == [1, 1, 1]
    assert len(set(e.keys.tolist())) == 3


def test_ext_zero_additions_is_identity():
    S = make_set(0, [[0.0], [1.0]], keys=[0.3, 0.6], weights=[2, 5])
    src = KeySource(0)
    e = ext(S, 2, src)
    assert np.array_equal(e.points, S.points) and np.array_equal(e.keys, S.keys)
    assert np.array_equal(e.weights, S.weights) and np.array_equal(e.ids, S.ids)
    assert src.master_counter == 0


def test_ext_does_not_mutate_and_appends_unit_weights():
    S = make_set(0, [[0.0], [1.0]], keys=[0.3, 0.6], weights=[2, 5])
    before = (S.points.copy(), S.keys.copy(), S.weights.copy())
    e = ext(S, 10, KeySource(0))
    assert np.array_equal(S.points, before[0]) and np.array_equal(S.keys, before[1])
    assert np.array_equal(S.weights, before[2])
    assert np.array_equal(e.points[:2], S.points) and e.keys[:2].tolist() == [0.3, 0.6]
    assert e.weights[2:].tolist() == [1] * 8
    assert np.all(e.ids[2:] == -1)
    # two stream values per appended entry
    ref = KeySource(0).draw(16)
    assert np.array_equal(e.keys[2:], ref[1::2])


def test_ext_rejects_shrinking():
    S = make_set(0, [[0.0], [1.0]])
    with pytest.raises(ValueError):
        ext(S, 1, KeySource(0))
    with pytest.raises(ValueError):
        ext(np.zeros(2), 0, KeySource(0))


def test_ext_weighted_sampling_chi_square():
    S = make_set(0, [[0.0], [1.0]], weights=[3, 1])
    e = ext(S, 2 + 4000, KeySource(77))
    counts = np.bincount(e.source[2:], minlength=2)
    res = stats.chisquare(counts, f_exp=[3000, 1000])
    assert res.pvalue > ALPHA
