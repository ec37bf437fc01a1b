"""Command-line entry point: train, fit, eval, monitor, cascade, overconfidence."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DivsafeError, InvariantViolation
from .harness.analysis import ActionFunction, error_cascade, overconfidence
from .harness.pipeline import Bundle, RuntimeMonitor, fit_bundle, load_data, run_evaluation, train_model
from .model import MlpModel
from .voter import VoterConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT = 3


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed, "output": args.out}
    cfg = RunConfig.load(args.config, **overrides)
    if args.voter:
        raw = cfg.to_dict()
        raw["voter"]["presets"] = [args.voter]
        raw["voter"]["configs"] = []
        cfg = RunConfig(raw)
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.raw["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_path(args, cfg) -> Path:
    return Path(args.model) if args.model else Path(cfg.raw["output"]) / "model.json"


def _bundle_path(args, cfg) -> Path:
    return Path(args.bundle) if args.bundle else Path(cfg.raw["output"]) / "bundle.json"


def _load_model(path: Path) -> MlpModel:
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return MlpModel.load(path)


def cmd_train(args) -> int:
    cfg = _config(args)
    train_ds = load_data(cfg.data["train"], cfg.seed)
    model, losses = train_model(cfg, train_ds)
    out = _outdir(cfg)
    model.save(out / "model.json")
    lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(losses)]
    (out / "loss.csv").write_text("\n".join(lines) + "\n")
    print(f"model written to {out / 'model.json'} (final loss {losses[-1]:.6g})", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    model = _load_model(_model_path(args, cfg))
    train_ds = load_data(cfg.data["train"], cfg.seed)
    calib_ds = load_data(cfg.data["calibrate"], cfg.seed)
    bundle = fit_bundle(cfg, model, train_ds, calib_ds)
    path = _outdir(cfg) / "bundle.json"
    bundle.save(path)
    print(f"bundle with {', '.join(bundle.ids)} written to {path}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .plotting import write_figures

    cfg = _config(args)
    model = _load_model(_model_path(args, cfg))
    bundle = Bundle.load(_bundle_path(args, cfg), model)
    dataset = load_data(cfg.data["evaluate"], cfg.seed)
    report = run_evaluation(cfg, model, bundle, dataset, latency_samples=args.latency_samples)
    out = _outdir(cfg)
    (out / "report.json").write_text(report.dumps())
    (out / "report.csv").write_text(report.to_csv())
    (out / "latency.json").write_text(json.dumps(report.latency, sort_keys=True, indent=2) + "\n")
    if not args.no_figures:
        write_figures(report, out / "figures")
    for row in report.csv_rows():
        print(f"{row['kind']:8s} {row['name']:18s} FP={row['FP']:4d} FN={row['FN']:4d}", file=sys.stderr)
    return EXIT_OK


def cmd_monitor(args) -> int:
    """Stream JSONL samples from stdin; one decision line per valid input line."""
    cfg = _config(args)
    model = _load_model(_model_path(args, cfg))
    bundle = Bundle.load(_bundle_path(args, cfg), model)
    voter = cfg.voter_configs()[0]
    monitor = RuntimeMonitor(model, bundle, voter, cfg.seed)
    status = EXIT_OK
    index = 0
    for lineno, line in enumerate(sys.stdin, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            x = np.asarray(rec["x"] if isinstance(rec, dict) else rec, dtype=float)
            if x.shape != (model.n_inputs,) or not np.all(np.isfinite(x)):
                raise ValueError(f"expected {model.n_inputs} finite values")
            sample_id = rec.get("id", index) if isinstance(rec, dict) else index
        except (ValueError, KeyError, TypeError) as exc:
            print(f"stdin:{lineno}: skipped malformed line ({exc})", file=sys.stderr)
            status = EXIT_ERROR
            continue
        decision = monitor.process(x, index)
        sys.stdout.write(json.dumps(decision.to_record(sample_id), sort_keys=True) + "\n")
        sys.stdout.flush()
        index += 1
    return status


def _vector(text: str) -> np.ndarray:
    try:
        return np.asarray(json.loads(text) if text.strip().startswith("[") else
                          [float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad vector {text!r}: {exc}") from None


def cmd_cascade(args) -> int:
    try:
        spec = json.loads(args.function)
    except json.JSONDecodeError as exc:
        raise DivsafeError(f"--function is not valid JSON: {exc}") from None
    result = error_cascade(ActionFunction.from_dict(spec), args.x, args.dx, args.fd_step)
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_overconfidence(args) -> int:
    rep = overconfidence(args.P, args.N, args.TP, args.FP, args.model_acc, args.true_acc)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--voter", metavar="SPEC", help="1oo3, 2oo3 or koon:k,n")

    parser = argparse.ArgumentParser(prog="divsafe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train the monitored model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit", parents=[common], help="fit and calibrate detectors")
    p.add_argument("--model", metavar="PATH")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="evaluate detectors and voters")
    p.add_argument("--model", metavar="PATH")
    p.add_argument("--bundle", metavar="PATH")
    p.add_argument("--latency-samples", type=int, default=200)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("monitor", parents=[common], help="vote on JSONL samples from stdin")
    p.add_argument("--model", metavar="PATH")
    p.add_argument("--bundle", metavar="PATH")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("cascade", parents=[common], help="first-order action error")
    p.add_argument("--function", required=True, help='e.g. {"kind": "linear", "coef": [3, 2]}')
    p.add_argument("--x", type=_vector, required=True, help="state, comma separated")
    p.add_argument("--dx", type=_vector, required=True, help="state error, comma separated")
    p.add_argument("--fd-step", type=float, default=1e-4)
    p.set_defaults(func=cmd_cascade)

    p = sub.add_parser("overconfidence", parents=[common], help="overconfidence conditions and index")
    for name in ("P", "N", "TP", "FP"):
        p.add_argument(f"--{name}", type=int, required=True)
    p.add_argument("--model-acc", type=float, required=True)
    p.add_argument("--true-acc", type=float, required=True)
    p.set_defaults(func=cmd_overconfidence)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: run-time invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DivsafeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
