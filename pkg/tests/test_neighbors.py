import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_path
from jdvol.neighbors import NaiveNeighborEngine, SortedNeighborEngine, neighbor_index


def brute_force(values, eps, v):
    """Direct loop over j = 1 .. n-1."""
    count, s2, s4 = 0, 0.0, 0.0
    for j in range(1, len(values) - 1):
        if abs(values[j] - v) <= eps:
            d = values[j + 1] - values[j]
            count += 1
            s2 += d * d
            s4 += d**4
    return count, s2, s4


def test_toy_path():
    # j = 1..3 has levels 1, 0, 1; only j = 2 sits at 0 (j = 4 has no forward increment)
    values = [0.0, 1.0, 0.0, 1.0, 0.0]
    for engine in ("naive", "fast"):
        c, s2, s4 = neighbor_index(values, 0.5, engine).query(0.0)
        assert (c[0], s2[0], s4[0]) == (1, 1.0, 1.0)
        c, s2, _ = neighbor_index(values, 0.5, engine).query(1.0)
        assert (c[0], s2[0]) == (2, 2.0)


def test_radius_covering_range():
    rng = np.random.default_rng(1)
    path = random_path(rng, 300)
    eps = 10 * np.ptp(path.values)
    inc = np.diff(path.values[1:])
    for engine in ("naive", "fast"):
        c, s2, s4 = neighbor_index(path, eps, engine).query(path.values[[5, 100]])
        assert np.all(c == path.n - 1)
        assert np.allclose(s2, np.sum(inc**2), rtol=1e-13)
        assert np.allclose(s4, np.sum(inc**4), rtol=1e-13)


def test_fast_matches_naive_random_queries():
    rng = np.random.default_rng(7)
    path = random_path(rng, 10_000)
    q = rng.uniform(path.values.min() - 0.1, path.values.max() + 0.1, 100)
    fast = SortedNeighborEngine(path.values, 0.05).query(q)
    naive = NaiveNeighborEngine(path.values, 0.05).query(q)
    assert np.array_equal(fast[0], naive[0])
    for a, b in zip(fast[1:], naive[1:]):
        assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_matches_brute_force_small():
    rng = np.random.default_rng(3)
    values = rng.standard_normal(40)
    for v in values[:10]:
        expect = brute_force(values, 0.3, v)
        got = [x[0] for x in neighbor_index(values, 0.3).query(v)]
        assert got[0] == expect[0]
        assert got[1] == pytest.approx(expect[1], rel=1e-13)
        assert got[2] == pytest.approx(expect[2], rel=1e-13)


def test_ties_and_boundary_inclusion():
    # levels exactly eps away are inside, including float-awkward spacings
    values = np.array([0.0, 0.1, 0.2, 0.3, 0.1, 0.2, 0.7, 0.3])
    for v in (0.2, 0.1, 0.3):
        fast = SortedNeighborEngine(values, 0.1).query(v)
        naive = NaiveNeighborEngine(values, 0.1).query(v)
        assert fast[0][0] == naive[0][0]
        assert fast[1][0] == pytest.approx(naive[1][0], rel=1e-15)


def test_prefix_sums_resist_cancellation():
    # a huge increment early in sorted order must not swamp small range sums
    values = np.concatenate(([0.0, -5.0, 1e4], np.linspace(1, 2, 200)))
    fast = SortedNeighborEngine(values, 1e-3).query(values[10:20])
    naive = NaiveNeighborEngine(values, 1e-3).query(values[10:20])
    assert np.allclose(fast[1], naive[1], rtol=1e-12, atol=0)


@settings(max_examples=60, deadline=None)
@given(
    values=arrays(np.float64, st.integers(3, 300), elements=st.floats(-5, 5, allow_subnormal=False)),
    eps=st.floats(1e-6, 3.0),
    data=st.data(),
)
def test_engines_agree_property(values, eps, data):
    q = np.array(data.draw(st.lists(st.floats(-6, 6), min_size=1, max_size=20)))
    q = np.concatenate((q, values[:5]))
    fast = SortedNeighborEngine(values, eps).query(q)
    naive = NaiveNeighborEngine(values, eps).query(q)
    assert np.array_equal(fast[0], naive[0])
    for a, b in zip(fast[1:], naive[1:]):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        neighbor_index([0.0, 1.0], 0.1)
    with pytest.raises(ValueError):
        neighbor_index([0.0, 1.0, 2.0], 0.0)
    with pytest.raises(ValueError, match="naive"):
        neighbor_index([0.0, 1.0, 2.0], 0.1, engine="kdtree")
