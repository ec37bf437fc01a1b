import io
import json
import shutil
import sys

import numpy as np
import pytest

from divsafe import cli


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """A full train -> fit -> eval run with the built-in defaults."""
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["train", "--out", str(out)]) == 0
    assert cli.main(["fit", "--out", str(out)]) == 0
    assert cli.main(["eval", "--out", str(out), "--latency-samples", "20"]) == 0
    return out


def test_outputs_present(run_dir):
    for name in ("model.json", "loss.csv", "bundle.json", "report.json", "report.csv", "latency.json"):
        assert (run_dir / name).stat().st_size > 0
    figs = sorted(p.name for p in (run_dir / "figures").iterdir())
    assert figs == ["confusion.png", "decisions_1oo3.png", "decisions_2oo3.png", "scores.png"]
    assert (run_dir / "figures" / "confusion.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_loss_csv_shape(run_dir):
    lines = (run_dir / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == 1 + 201  # initial loss plus 200 epochs


def test_report_blocks(run_dir):
    rep = json.loads((run_dir / "report.json").read_text())
    assert set(rep["detectors"]) == {"isolation_forest", "lof", "reject_class", "softmax", "temperature",
                                     "mahalanobis", "mc_dropout", "ensemble", "lo_glrt"}
    assert set(rep["voters"]) == {"1oo3", "2oo3"}
    assert "latency" not in rep
    assert rep["extras"]["retention"] == 0.95
    assert set(json.loads((run_dir / "latency.json").read_text())) >= {"median_ms", "p99_ms"}


def test_bundle_metadata_and_round_trip(run_dir):
    from divsafe.harness.pipeline import Bundle
    from divsafe.model import MlpModel

    text = (run_dir / "bundle.json").read_text()
    assert json.loads(text)["metadata"]["retention"] == 0.95
    model = MlpModel.load(run_dir / "model.json")
    assert Bundle.from_dict(json.loads(text), model).dumps() == text


def test_train_is_bit_identical(run_dir, tmp_path):
    assert cli.main(["train", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "model.json").read_bytes() == (run_dir / "model.json").read_bytes()
    assert (tmp_path / "loss.csv").read_bytes() == (run_dir / "loss.csv").read_bytes()


def test_eval_is_byte_identical(run_dir, tmp_path):
    for name in ("model.json", "bundle.json"):
        shutil.copy(run_dir / name, tmp_path / name)
    assert cli.main(["eval", "--out", str(tmp_path), "--latency-samples", "5", "--no-figures"]) == 0
    assert (tmp_path / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()
    assert (tmp_path / "report.csv").read_bytes() == (run_dir / "report.csv").read_bytes()
    assert not (tmp_path / "figures").exists()


def test_disabled_detector_absent(run_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"detectors": {"mahalanobis": {"enabled": False}, "ensemble": {"enabled": False},
                                             "lo_glrt": {"enabled": False}, "mc_dropout": {"enabled": False}}}))
    code = cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path), "--model", str(run_dir / "model.json")])
    assert code == 0
    ids = [d["type"] for d in json.loads((tmp_path / "bundle.json").read_text())["detectors"]]
    assert "mahalanobis" not in ids and "ensemble" not in ids and len(ids) == 5


def test_missing_data_path(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    missing = tmp_path / "nope" / "train.jsonl"
    cfg.write_text(json.dumps({"data": {"train": {"path": str(missing)}}}))
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path)]) != 0
    assert str(missing) in capsys.readouterr().err


def test_missing_model(tmp_path, capsys):
    assert cli.main(["fit", "--out", str(tmp_path)]) == 1
    assert "model.json" in capsys.readouterr().err


def test_invariant_violation_exit_code(run_dir, tmp_path, monkeypatch):
    ev = sys.modules["divsafe.harness.evaluate"]
    monkeypatch.setattr(ev, "vote_counts", lambda k, mat: np.zeros(len(mat), dtype=bool))
    for name in ("model.json", "bundle.json"):
        shutil.copy(run_dir / name, tmp_path / name)
    assert cli.main(["eval", "--out", str(tmp_path), "--latency-samples", "0", "--no-figures"]) == cli.EXIT_INVARIANT
    assert not (tmp_path / "report.json").exists()


def _monitor(run_dir, monkeypatch, capsys, text, *extra):
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    code = cli.main(["monitor", "--out", str(run_dir), *extra])
    return code, capsys.readouterr()


def test_monitor_empty_input(run_dir, monkeypatch, capsys):
    code, cap = _monitor(run_dir, monkeypatch, capsys, "")
    assert code == 0 and cap.out == ""


def test_monitor_lines(run_dir, monkeypatch, capsys):
    text = '{"x": [0.1, 0.2], "id": "a"}\n[40.0, -40.0]\n{"x": [1, 2, 3]}\nnot json\n[0, 0]\n'
    code, cap = _monitor(run_dir, monkeypatch, capsys, text)
    records = [json.loads(line) for line in cap.out.splitlines()]
    assert code == 1 and len(records) == 3
    assert records[0]["sample_id"] == "a" and records[1]["sample_id"] == 1
    assert "stdin:3:" in cap.err and "stdin:4:" in cap.err


def test_monitor_far_point_flagged(run_dir, monkeypatch, capsys):
    code, cap = _monitor(run_dir, monkeypatch, capsys, "[60.0, -60.0]\n", "--voter", "1oo3")
    rec = json.loads(cap.out)
    assert code == 0 and rec["final"] == "OOD"


def test_cascade(capsys):
    code = cli.main(["cascade", "--function", '{"kind": "linear", "coef": [3, 2]}', "--x", "1,1",
                     "--dx", "0.1,-0.2"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0 and out["dA"] == -0.1


def test_cascade_bad_function(capsys):
    assert cli.main(["cascade", "--function", "{nope", "--x", "1", "--dx", "0"]) == 1
    assert "error:" in capsys.readouterr().err


def test_overconfidence(capsys):
    code = cli.main(["overconfidence", "--P", "10", "--N", "10", "--TP", "6", "--FP", "5",
                     "--model-acc", "0.8", "--true-acc", "0.8"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0 and out["is_overconfident"] is True and out["confidence_index"] == 1.0


def test_overconfidence_inconsistent(capsys):
    assert cli.main(["overconfidence", "--P", "5", "--N", "5", "--TP", "6", "--FP", "0",
                     "--model-acc", "0.5", "--true-acc", "0.5"]) == 1


def test_bad_voter_spec(capsys, tmp_path):
    assert cli.main(["train", "--out", str(tmp_path), "--voter", "3oo2"]) == 1
