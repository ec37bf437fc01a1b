import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divsafe.detectors.shift import SMOOTHING, Histogram, ShiftDetector, kl_divergence, reference_edges
from divsafe.errors import CalibrationError, InvalidInputError, ShapeError
from oracles import kl_script


def smooth(p, eps=SMOOTHING):
    q = [v / sum(p) + eps for v in p]
    return [v / sum(q) for v in q]


def test_identical_histograms():
    P = Histogram.from_counts([3, 1, 0, 6])
    assert kl_divergence(P, P) == 0.0


def test_dominant_term_is_ln2():
    P = Histogram.from_counts([1, 0])
    Q = Histogram.from_counts([0.5, 0.5])
    assert kl_divergence(P, Q) == pytest.approx(math.log(2), abs=1e-3)


def test_matches_script():
    P = Histogram.from_counts([0.5, 0.5])
    Q = Histogram.from_counts([0.25, 0.75])
    assert kl_divergence(P, Q) == pytest.approx(kl_script(smooth([0.5, 0.5]), smooth([0.25, 0.75])), abs=1e-12)


def test_mismatched_binning():
    with pytest.raises(ShapeError):
        kl_divergence(Histogram.from_counts([1, 1]), Histogram.from_counts([1, 1, 1]))
    with pytest.raises(ShapeError):
        kl_divergence(Histogram.from_counts([1, 1], [0, 1, 2]), Histogram.from_counts([1, 1], [0, 1, 3]))


@given(st.lists(st.integers(0, 50), min_size=2, max_size=20).filter(lambda c: sum(c) > 0),
       st.lists(st.integers(0, 50), min_size=2, max_size=20).filter(lambda c: sum(c) > 0))
def test_nonnegative_and_smoothed(a, b):
    n = min(len(a), len(b))
    P, Q = Histogram.from_counts(a[:n] if sum(a[:n]) else [1] * n), Histogram.from_counts(b[:n] if sum(b[:n]) else [1] * n)
    for H in (P, Q):
        assert np.all(H.masses > 0)
        assert abs(H.masses.sum() - 1) <= 1e-9
    assert kl_divergence(P, Q) >= 0.0


def test_edges_inflate_reference_range():
    e = reference_edges(np.array([0.0, 10.0]), 16)
    assert len(e) == 17
    assert e[0] == pytest.approx(-0.5) and e[-1] == pytest.approx(10.5)


def test_out_of_range_values_land_in_edge_bins():
    edges = np.linspace(0, 1, 5)
    H = Histogram.from_values([-5.0, 0.1, 7.0, 7.0], edges, epsilon=0.0)
    assert H.masses.tolist() == [0.5, 0.0, 0.0, 0.5]


def _reference(seed=0, n=2000):
    return np.random.default_rng(seed).normal([0.0, 3.0], [1.0, 0.5], (n, 2))


def _calibrated(window=100):
    ref = _reference()
    det = ShiftDetector(window=window).fit(ref)
    g = np.random.default_rng(1)
    det.calibrate([g.normal([0.0, 3.0], [1.0, 0.5], (window, 2)) for _ in range(200)], 0.99)
    return det


def test_identical_window_has_zero_divergence():
    ref = _reference()
    det = ShiftDetector(window=100).fit(ref)
    det.tau = 0.1
    v = det.check(ref)
    assert v.score == 0.0 and not v.is_ood
    assert v.voter_eligible is False


def test_same_distribution_window_not_flagged():
    det = _calibrated()
    live = np.random.default_rng(99).normal([0.0, 3.0], [1.0, 0.5], (100, 2))
    assert not det.check(live).is_ood


def test_five_sigma_shift_flagged():
    det = _calibrated()
    live = np.random.default_rng(99).normal([5.0, 3.0], [1.0, 0.5], (100, 2))
    assert det.check(live).is_ood


def test_sliding_window():
    det = _calibrated(window=40)
    g = np.random.default_rng(5)
    for x in g.normal([0.0, 3.0], [1.0, 0.5], (29, 2)):
        det.update(x)
    assert det.check_window() is None
    det.update(np.array([0.0, 3.0]))
    assert det.check_window() is not None
    for x in g.normal([0.0, 3.0 + 5 * 0.5], [1.0, 0.5], (40, 2)):
        det.update(x)
    assert det.check_window().is_ood


def test_window_errors():
    with pytest.raises(InvalidInputError):
        ShiftDetector(window=10)
    det = ShiftDetector(window=30).fit(_reference())
    with pytest.raises(InvalidInputError):
        det.statistic(np.zeros((29, 2)))
    with pytest.raises(CalibrationError):
        det.check(np.zeros((30, 2)))
    with pytest.raises(ShapeError):
        det.statistic(np.zeros((30, 3)))


def test_round_trip():
    det = _calibrated()
    back = ShiftDetector.from_dict(det.to_dict())
    live = np.random.default_rng(3).normal(size=(100, 2))
    assert back.statistic(live) == det.statistic(live)
    assert back.tau == det.tau
