import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divsafe.detectors.lof import LocalOutlierFactor
from divsafe.errors import FitError, ShapeError
from oracles import lof_bruteforce


def polygon(n, r=1.0):
    t = 2 * np.pi * np.arange(n) / n
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def test_hexagon_vertex_query_is_exactly_one():
    hexagon = polygon(6)
    lof = LocalOutlierFactor(k=2).fit(hexagon)
    assert lof.score(hexagon[0]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", range(4, 13))
def test_every_polygon_vertex_scores_one(n):
    P = polygon(n, 2.5)
    scores = LocalOutlierFactor(k=2).fit(P).score_samples(P)
    assert np.allclose(scores, 1.0, rtol=0, atol=1e-12)


def test_far_point_above_one():
    cluster = np.random.default_rng(0).normal(0, 0.1, (50, 2))
    lof = LocalOutlierFactor(k=5).fit(cluster)
    assert lof.score(np.array([3.0, 3.0])) > 1.0


def grid_fixture():
    g = np.linspace(0, 1, 10)
    grid = np.array([(a, b) for a in g for b in g])
    return np.concatenate([grid, [[5.0, 5.0]]])


def test_grid_with_outlier_matches_bruteforce():
    X = grid_fixture()
    lof = LocalOutlierFactor(k=10).fit(X)
    lib = lof.score_samples(X)
    oracle = lof_bruteforce(X, X, 10)
    assert np.allclose(lib, oracle, rtol=0, atol=1e-9)
    assert lib[-1] > 1.0 and lib[-1] == lib.max()


def test_grid_reference_outlier_query_matches_bruteforce():
    X = grid_fixture()
    lof = LocalOutlierFactor(k=10).fit(X[:-1])
    assert lof.score(X[-1]) == pytest.approx(lof_bruteforce(X[:-1], X[-1:], 10)[0], abs=1e-9)


@pytest.mark.parametrize("n,k,seed", [(500, 20, 0), (300, 10, 1), (60, 3, 2)])
def test_random_fixtures_match_bruteforce(n, k, seed):
    g = np.random.default_rng(seed)
    R = g.normal(size=(n, 2))
    Q = np.concatenate([R[:40], g.normal(0, 3, (40, 2))])
    lib = LocalOutlierFactor(k).fit(R).score_samples(Q)
    assert np.allclose(lib, lof_bruteforce(R, Q, k), rtol=0, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 60), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_duplicates_and_ties_match_bruteforce(n, k, seed):
    g = np.random.default_rng(seed)
    R = np.round(g.uniform(0, 2, (n, 2)), 0)          # heavy duplication
    if k >= n:
        return
    Q = np.concatenate([R[:5], g.uniform(-1, 3, (5, 2))])
    lib = LocalOutlierFactor(k).fit(R).score_samples(Q)
    ref = lof_bruteforce(R, Q, k)
    assert np.all(np.isfinite(lib))
    assert np.allclose(lib, ref, rtol=1e-9, atol=1e-9)


def test_all_duplicates_finite():
    R = np.zeros((10, 2))
    lof = LocalOutlierFactor(k=3).fit(R)
    assert np.isfinite(lof.score(np.zeros(2)))
    assert np.isfinite(lof.score(np.ones(2)))


def test_errors():
    with pytest.raises(FitError):
        LocalOutlierFactor(k=5).fit(np.zeros((5, 2)))
    lof = LocalOutlierFactor(k=2).fit(polygon(6))
    with pytest.raises(ShapeError):
        lof.score(np.zeros(3))


def test_round_trip():
    R = np.random.default_rng(0).normal(size=(50, 2))
    lof = LocalOutlierFactor(4).fit(R)
    back = LocalOutlierFactor.from_dict(lof.to_dict())
    assert np.array_equal(back.score_samples(R), lof.score_samples(R))
