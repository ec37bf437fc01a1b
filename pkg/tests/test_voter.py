import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divsafe.detectors import DetectorVerdict
from divsafe.errors import ChannelFaultError, ConfigurationError
from divsafe.voter import DEFAULT_CHANNELS, VoterConfig, dominance_check, vote, vote_counts

CH = DEFAULT_CHANNELS


def verdicts(flags, channels=CH, eligible=True):
    return [DetectorVerdict.from_score(c, 1.0 if f else 0.0, 0.5, eligible) for c, f in zip(channels, flags)]


@pytest.mark.parametrize("preset,flags,final", [
    ("1oo3", [1, 0, 0], "OOD"),
    ("2oo3", [1, 0, 0], "ID"),
    ("2oo3", [1, 1, 0], "OOD"),
    ("koon:3,3", [1, 1, 0], "ID"),
    ("koon:3,3", [1, 1, 1], "OOD"),
])
def test_vote_examples(preset, flags, final):
    d = vote(VoterConfig.preset(preset), verdicts(flags))
    assert d.final.value == final
    assert d.ood_votes == sum(flags)


def test_preset_names():
    assert VoterConfig.preset("1oo3").name == "1oo3"
    assert VoterConfig.preset("koon:2,3") == VoterConfig.preset("2oo3")
    with pytest.raises(ConfigurationError):
        VoterConfig.preset("majority")


def test_config_validation():
    with pytest.raises(ConfigurationError):
        VoterConfig(4, 3, CH)
    with pytest.raises(ConfigurationError):
        VoterConfig(1, 3, ("a", "a", "b"))
    with pytest.raises(ConfigurationError):
        VoterConfig(1, 2, CH)


def test_missing_channel_is_a_fault():
    cfg = VoterConfig.preset("2oo3")
    with pytest.raises(ChannelFaultError):
        vote(cfg, verdicts([1, 0]))
    with pytest.raises(ChannelFaultError):
        vote(cfg, [None] + verdicts([0, 0])[1:])


def test_fail_safe_counts_missing_as_ood():
    cfg = VoterConfig.preset("1oo3", fail_safe=True)
    d = vote(cfg, [None] + verdicts([0, 0], CH[1:]))
    assert d.is_ood and d.ood_votes == 1


def test_channel_order_and_eligibility_enforced():
    cfg = VoterConfig.preset("1oo3")
    with pytest.raises(ChannelFaultError):
        vote(cfg, verdicts([0, 0, 0], CH[::-1]))
    with pytest.raises(ConfigurationError):
        vote(cfg, verdicts([0, 0, 0], eligible=False))


def test_even_n_half_k_uses_count_semantics():
    ch = ("a", "b", "c", "d")
    assert vote(VoterConfig(2, 4, ch), verdicts([1, 1, 0, 0], ch)).is_ood
    assert not vote(VoterConfig(2, 4, ch), verdicts([1, 0, 0, 0], ch)).is_ood


flag_rows = st.lists(st.lists(st.booleans(), min_size=3, max_size=3), min_size=1, max_size=50)


@given(flag_rows)
def test_dominance_always_holds(rows):
    d1 = [vote(VoterConfig.preset("1oo3"), verdicts(r)) for r in rows]
    d2 = [vote(VoterConfig.preset("2oo3"), verdicts(r)) for r in rows]
    assert dominance_check(d1, d2)


def test_unanimous_stream_gives_equal_sets():
    rows = [[1, 1, 1], [0, 0, 0]] * 5
    d1 = [vote(VoterConfig.preset("1oo3"), verdicts(r)) for r in rows]
    d2 = [vote(VoterConfig.preset("2oo3"), verdicts(r)) for r in rows]
    assert [a.is_ood for a in d1] == [b.is_ood for b in d2]


def test_single_dissenter_stream():
    rows = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert all(vote(VoterConfig.preset("1oo3"), verdicts(r)).is_ood for r in rows)
    assert not any(vote(VoterConfig.preset("2oo3"), verdicts(r)).is_ood for r in rows)


def test_dominance_rejects_mismatched_streams():
    d = [vote(VoterConfig.preset("1oo3"), verdicts([0, 0, 0]))]
    with pytest.raises(ConfigurationError):
        dominance_check(d, d + d)


@given(st.lists(st.lists(st.booleans(), min_size=5, max_size=5), min_size=1, max_size=40),
       st.lists(st.booleans(), min_size=1, max_size=40))
def test_flag_sets_shrink_with_k(rows, truth):
    flags = np.array(rows)
    is_ood = np.resize(np.array(truth), len(rows))
    prev = None
    for k in range(1, 6):
        f = vote_counts(k, flags)
        if prev is not None:
            assert not np.any(f & ~prev)
            assert np.sum(~f & is_ood) >= np.sum(~prev & is_ood)      # FN grows
            assert np.sum(f & ~is_ood) <= np.sum(prev & ~is_ood)      # FP shrinks
        prev = f
    one = vote_counts(1, flags)
    for c in range(5):
        assert np.sum(~one & is_ood) <= np.sum(~flags[:, c] & is_ood)
        assert np.sum(one & ~is_ood) >= np.sum(flags[:, c] & ~is_ood)


@given(st.lists(st.booleans(), min_size=3, max_size=3), st.permutations(range(3)))
def test_vote_independent_of_channel_permutation(flags, perm):
    ch = tuple(CH[i] for i in perm)
    f = [flags[i] for i in perm]
    for k in (1, 2, 3):
        assert vote(VoterConfig(k, 3, CH), verdicts(flags)).final == vote(VoterConfig(k, 3, ch), verdicts(f, ch)).final


def test_vectorised_matches_scalar():
    rows = np.random.default_rng(0).random((100, 3)) > 0.6
    for k in (1, 2, 3):
        scalar = [vote(VoterConfig(k, 3, CH), verdicts(r)).is_ood for r in rows]
        assert vote_counts(k, rows).tolist() == scalar


def test_decision_record():
    rec = vote(VoterConfig.preset("2oo3"), verdicts([1, 1, 0])).to_record(sample_id="s1")
    assert rec["final"] == "OOD" and rec["ood_votes"] == 2 and rec["sample_id"] == "s1"
    assert [c["detector_id"] for c in rec["channels"]] == list(CH)
