import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divsafe.detectors import LayerMonitor, Observation
from divsafe.errors import CalibrationError, ConfigurationError
from divsafe.model import MlpModel


class StubBackend:
    """Returns fixed per-sample scores and counts calls."""

    def __init__(self, value):
        self.value = value
        self.calls = 0

    def score(self, _):
        self.calls += 1
        return self.value

    def score_samples(self, X):
        return np.full(len(X), self.value)


def stub_monitor(left, right):
    model = MlpModel.create([2, 4, 4, 3], seed=0)
    mon = LayerMonitor("isolation_forest").bind(model)
    mon.backends = {0: StubBackend(left), 1: StubBackend(right)}
    mon.layer_thresholds = {0: 1.0, 1: 1.0}
    return mon, model


def check(mon, model):
    return mon.check(model.forward(np.zeros(2), tap=True)[1])


def test_all_layers_id():
    mon, model = stub_monitor(0.2, 0.3)
    out = check(mon, model)
    assert not out.verdict.is_ood
    assert out.evaluated == [1, 0]


def test_rightmost_flag_exits_early():
    mon, model = stub_monitor(5.0, 2.0)
    out = check(mon, model)
    assert out.verdict.is_ood
    assert out.evaluated == [1]
    assert mon.backends[0].calls == 0


def test_left_only_flag_needs_two_evaluations():
    mon, model = stub_monitor(2.0, 0.5)
    out = check(mon, model)
    assert out.verdict.is_ood and out.evaluated == [1, 0]
    assert out.verdict.score == 2.0


@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0, 3)), min_size=1, max_size=20))
def test_verdict_is_or_of_layers(pairs):
    model = MlpModel.create([2, 4, 4, 3], seed=0)
    for left, right in pairs:
        mon, _ = stub_monitor(left, right)
        expected = left > 1.0 or right > 1.0
        assert check(mon, model).verdict.is_ood == expected
        obs = Observation.compute(model, np.zeros((1, 2)))
        assert (mon.score_batch(obs)[0] > mon.threshold) == expected


@pytest.mark.parametrize("backend", ["isolation_forest", "lof"])
def test_real_left_only_input(default_run, backend):
    """Search inputs the output-side layer accepts but the input-side layer rejects."""
    model, mon = default_run["model"], default_run["bundle"][backend]
    grid = np.mgrid[-30:30:0.5, -30:30:0.5].reshape(2, -1).T
    scores = mon.layer_scores(Observation.compute(model, grid))
    left = scores[0] / mon.layer_thresholds[0] > 1
    right = scores[1] / mon.layer_thresholds[1] > 1
    candidates = np.flatnonzero(left & ~right)
    assert len(candidates) > 0
    x = grid[candidates[0]]
    out = mon.check(model.forward(x, tap=True)[1])
    assert out.verdict.is_ood and out.evaluated == [1, 0]


@pytest.mark.parametrize("backend", ["isolation_forest", "lof"])
def test_batch_and_single_agree(default_run, backend):
    model, mon = default_run["model"], default_run["bundle"][backend]
    X = default_run["evaluate"].samples[::25]
    batch = mon.score_batch(Observation.compute(model, X))
    single = [mon.check(model.forward(x, tap=True)[1]).verdict.score for x in X]
    assert np.allclose(batch, single, rtol=0, atol=1e-12)


def test_bonferroni_calibration_keeps_retention(default_run):
    model = default_run["model"]
    from divsafe.harness.data import fixture
    calib = fixture("calibrate")
    obs = Observation.compute(model, calib.samples)
    for name in ("isolation_forest", "lof"):
        mon = default_run["bundle"][name]
        assert np.mean(mon.score_batch(obs) <= mon.threshold) >= 0.95


def test_untapped_layer_rejected():
    model = MlpModel.create([2, 4, 3], seed=0)
    with pytest.raises(ConfigurationError):
        LayerMonitor("lof", layers=[1]).bind(model)
    with pytest.raises(ConfigurationError):
        LayerMonitor("svm")


def test_uncalibrated_monitor():
    mon, model = stub_monitor(0.1, 0.1)
    mon.layer_thresholds = {}
    with pytest.raises(CalibrationError):
        check(mon, model)
