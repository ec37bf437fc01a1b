import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divsafe.detectors.channels import Detector
from divsafe.errors import CalibrationError, ConfigurationError, InvariantViolation
from divsafe.harness.evaluate import Confusion, auroc, check_voter_identities, evaluate
from divsafe.harness.evaluate import _Named
from divsafe.harness.pipeline import run_evaluation
from divsafe.voter import VoterConfig


class ConstantDetector(Detector):
    """Always returns the same score; below threshold means always ID."""

    kind = "constant"
    default_eligible = True

    def __init__(self, detector_id, value=0.0, threshold=1.0):
        super().__init__(detector_id, threshold=threshold)
        self.value = value

    def score_batch(self, obs):
        return np.full(len(obs), self.value)


@pytest.fixture(scope="module")
def report(default_run):
    r = default_run
    return run_evaluation(r["cfg"], r["model"], r["bundle"], r["evaluate"], latency_samples=20)


def test_confusion_partitions(report):
    for table in (report.detectors, report.voters):
        for entry in table.values():
            assert entry["TP"] + entry["FN"] == report.n_ood
            assert entry["FP"] + entry["TN"] == report.n_id


def test_1oo3_identities(report):
    one = report.voters["1oo3"]
    for ch in one["config"]["channels"]:
        assert one["FN"] <= report.detectors[ch]["FN"]
        assert one["FP"] >= report.detectors[ch]["FP"]


def test_k_monotonicity(report):
    a, b = report.voters["1oo3"], report.voters["2oo3"]
    assert a["FN"] <= b["FN"] and a["FP"] >= b["FP"]
    assert not np.any(report.flags["2oo3"] & ~report.flags["1oo3"])


def test_latency_not_in_report(report):
    assert "latency" not in report.to_dict()
    assert report.latency["samples"] == 20


def test_csv_has_one_row_per_detector_and_voter(report):
    lines = report.to_csv().strip().splitlines()
    assert lines[0].startswith("kind,name,TP,FP,TN,FN")
    assert len(lines) == 1 + len(report.detectors) + len(report.voters)


def test_id_only_dataset(default_run):
    r = default_run
    ds = r["evaluate"].id_only()
    rep = evaluate(r["model"], r["bundle"].detectors, r["cfg"].voter_configs(), ds, seed=0, latency_samples=0)
    assert rep.n_ood == 0
    for table in (rep.detectors, rep.voters):
        for entry in table.values():
            assert entry["TP"] == 0 and entry["FN"] == 0 and entry["recall"] is None


def test_constant_id_channel_leaves_1oo3_unchanged(default_run):
    r = default_run
    dets = list(r["bundle"].detectors)
    base = VoterConfig(1, 2, ("reject_class", "isolation_forest"))
    extra = VoterConfig(1, 3, ("reject_class", "isolation_forest", "const"))
    rep = evaluate(r["model"], dets + [ConstantDetector("const")], [base, extra], r["evaluate"],
                   latency_samples=0)
    names = list(rep.voters)
    assert np.array_equal(rep.flags[names[0]], rep.flags[names[1]])


def test_uncalibrated_detector_rejected(default_run):
    r = default_run
    with pytest.raises(CalibrationError):
        evaluate(r["model"], [ConstantDetector("c", threshold=None)], [], r["evaluate"])


def test_ineligible_channel_rejected(default_run):
    r = default_run
    vc = VoterConfig(1, 3, ("reject_class", "isolation_forest", "softmax"))
    with pytest.raises(ConfigurationError):
        evaluate(r["model"], r["bundle"].detectors, [vc], r["evaluate"], latency_samples=0)


def test_identity_check_catches_violation():
    is_ood = np.array([True, True, False, False])
    flags = {"a": np.array([True, False, False, False]),
             "b": np.array([False, True, False, False]),
             "bad": np.zeros(4, dtype=bool)}
    vc = VoterConfig(1, 2, ("a", "b"))
    with pytest.raises(InvariantViolation):
        check_voter_identities([_Named(vc, "bad")], flags, is_ood)
    flags["good"] = flags["a"] | flags["b"]
    check_voter_identities([_Named(vc, "good")], flags, is_ood)


def test_auroc_examples():
    assert auroc([0, 1], [2, 3]) == 1.0
    assert auroc([2, 3], [0, 1]) == 0.0
    assert auroc([1, 1], [1, 1]) == 0.5


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_auroc_matches_pair_count(neg, pos):
    pairs = [(p > n) + 0.5 * (p == n) for p in pos for n in neg]
    assert auroc(neg, pos) == pytest.approx(np.mean(pairs), abs=1e-12)


@given(st.lists(st.booleans(), max_size=40), st.data())
def test_confusion_sums(flags, data):
    ood = data.draw(st.lists(st.booleans(), min_size=len(flags), max_size=len(flags)))
    c = Confusion.from_flags(flags, ood)
    assert c.TP + c.FP + c.TN + c.FN == len(flags)
