"""Glue between a run configuration and the model/detector/voter pieces."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..config import RunConfig, eligible
from ..detectors import (
    EnsembleDetector,
    LayerMonitor,
    LoGlrtDetector,
    MahalanobisDetector,
    McDropoutDetector,
    Observation,
    RejectClassDetector,
    ShiftDetector,
    SoftmaxDetector,
    TemperatureDetector,
    detector_from_dict,
)
from ..errors import ConfigurationError
from ..model import MlpModel, TrainConfig, train
from ..seeding import derive_seed, rng
from ..voter import VoteDecision, VoterConfig, vote
from .data import LabeledDataset, class_statistics, fixture, gen_id, gen_ood, proxy_ood, universal_perturbation

BUNDLE_FORMAT = "divsafe-detector-bundle"
BUNDLE_VERSION = 1


def load_data(spec: dict, seed: int) -> LabeledDataset:
    if "path" in spec:
        return LabeledDataset.from_jsonl(spec["path"])
    gen = spec["generator"]
    if gen == "fixture":
        return fixture(spec["part"], spec.get("seed", seed))
    if gen == "gen_id":
        params = {k: spec[k] for k in ("classes", "per_class", "dim", "spread") if k in spec}
        ds = gen_id(seed=spec.get("seed", seed), **params)
        if "ood" in spec:
            o = spec["ood"]
            ds = LabeledDataset.concat([ds, gen_ood(ds, o["kind"], o["count"], o.get("seed", seed))])
        return ds
    raise ConfigurationError(f"unknown data generator {gen!r}")


def training_set(cfg: RunConfig, train_ds: LabeledDataset, n_classes: int):
    """ID training rows, plus proxy-OOD rows labelled as the reject class."""
    ids = train_ds.id_only()
    X, y = ids.samples, ids.labels
    if cfg.model["reject_class"]:
        count = int(round(cfg.model["proxy_ood_ratio"] * len(ids)))
        px = proxy_ood(ids, count, derive_seed(cfg.seed, "proxy"))
        X = np.concatenate([X, px])
        y = np.concatenate([y, np.full(len(px), n_classes)])
    return X, y


def train_model(cfg: RunConfig, train_ds: LabeledDataset):
    m = cfg.model
    ids = train_ds.id_only()
    if len(ids) == 0:
        raise ConfigurationError("training data contains no ID samples")
    n_classes = int(ids.labels.max()) + 1
    sizes = [ids.dim, *m["hidden"], n_classes + (1 if m["reject_class"] else 0)]
    model = MlpModel.create(sizes, seed=cfg.seed, hidden_activation=m["activation"],
                            has_reject_class=m["reject_class"], dropout_rate=m["dropout"],
                            temperature=m["temperature"])
    X, y = training_set(cfg, train_ds, n_classes)
    hyper = TrainConfig(m["learning_rate"], m["epochs"], m["batch_size"], derive_seed(cfg.seed, "train"))
    return train(model, X, y, hyper)


def build_detector(detector_id: str, section: dict, model: MlpModel, train_ds: LabeledDataset, cfg: RunConfig):
    ok = eligible(detector_id, section)
    if detector_id in ("isolation_forest", "lof"):
        params = ({"n_trees": section["n_trees"], "subsample_size": section["subsample_size"]}
                  if detector_id == "isolation_forest" else {"k": section["k"]})
        return LayerMonitor(detector_id, section.get("layers"), params, detector_id=detector_id)
    if detector_id == "reject_class":
        return RejectClassDetector()
    if detector_id == "softmax":
        return SoftmaxDetector()
    if detector_id == "temperature":
        return TemperatureDetector(section["temperature"])
    if detector_id == "mahalanobis":
        return MahalanobisDetector(section["layer"])
    if detector_id == "mc_dropout":
        return McDropoutDetector(section["n_samples"], voter_eligible=ok)
    if detector_id == "ensemble":
        m = cfg.model
        return EnsembleDetector(section["n_members"], section["epochs"], m["learning_rate"], m["batch_size"],
                                voter_eligible=ok)
    if detector_id == "lo_glrt":
        ids = train_ds.id_only()
        _, spread = class_statistics(ids)
        uap = universal_perturbation(model, ids.samples, ids.labels, section["epsilon"] * spread)
        n_sub = section.get("n_subvectors") or ids.dim
        return LoGlrtDetector(n_sub, uap[None, :])
    raise ConfigurationError(f"unknown detector {detector_id!r}")


class Bundle:
    """Fitted, calibrated detectors plus the report-only shift detector."""

    def __init__(self, detectors: list, shift=None, metadata=None):
        self.detectors = list(detectors)
        self.shift = shift
        self.metadata = dict(metadata or {})

    def __getitem__(self, detector_id):
        for d in self.detectors:
            if d.detector_id == detector_id:
                return d
        raise KeyError(detector_id)

    def __contains__(self, detector_id):
        return any(d.detector_id == detector_id for d in self.detectors)

    @property
    def ids(self) -> list:
        return [d.detector_id for d in self.detectors]

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "metadata": self.metadata,
            "detectors": [d.to_dict() for d in self.detectors],
            "shift": None if self.shift is None else self.shift.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d: dict, model: MlpModel) -> "Bundle":
        if d.get("format") != BUNDLE_FORMAT:
            raise ConfigurationError("not a detector bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise ConfigurationError(f"unsupported bundle version {d.get('version')!r}")
        dets = [detector_from_dict(x, model) for x in d["detectors"]]
        shift = None if d.get("shift") is None else ShiftDetector.from_dict(d["shift"])
        return cls(dets, shift, d.get("metadata"))

    @classmethod
    def load(cls, path, model: MlpModel) -> "Bundle":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"bundle file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()), model)


def fit_bundle(cfg: RunConfig, model: MlpModel, train_ds: LabeledDataset, calib_ds: LabeledDataset) -> Bundle:
    retention = cfg.detectors["retention"]
    ids = train_ds.id_only()
    calib = calib_ds.id_only()
    calib_obs = Observation.compute(model, calib.samples, base_seed=derive_seed(cfg.seed, "calibrate"))
    detectors = []
    for detector_id in cfg.enabled_detectors():
        section = cfg.detectors[detector_id]
        det = build_detector(detector_id, section, model, ids, cfg)
        if detector_id == "ensemble":
            X, y = training_set(cfg, ids, model.n_classes)
        else:
            X, y = ids.samples, ids.labels
        det.fit(model, X, y, seed=derive_seed(cfg.seed, "fit", detector_id))
        det.calibrate(calib_obs, retention)
        detectors.append(det)
    shift = None
    s = cfg.detectors.get("shift", {})
    if s.get("enabled"):
        shift = ShiftDetector(s["bins"], s["window"]).fit(ids.samples)
        windows = []
        for i in range(s["calibration_windows"]):
            g = rng(cfg.seed, "shift-window", i)
            windows.append(calib.samples[g.choice(len(calib), size=min(s["window"], len(calib)), replace=False)])
        shift.calibrate(windows, s["quantile"])
    meta = {"retention": retention, "seed": cfg.seed, "model_seed": model.seed}
    return Bundle(detectors, shift, meta)


class RuntimeMonitor:
    """Single-sample monitor path: one tapped forward pass, channel verdicts, vote."""

    def __init__(self, model: MlpModel, bundle: Bundle, voter: VoterConfig, seed: int = 0):
        self.model = model
        self.voter = voter
        self.seed = seed
        missing = [c for c in voter.channels if c not in bundle]
        if missing and not voter.fail_safe:
            raise ConfigurationError(f"bundle lacks voter channels {missing}")
        self.channels = [bundle[c] if c in bundle else None for c in voter.channels]

    def process(self, x, sample_index: int = 0) -> VoteDecision:
        logits, trace = self.model.forward(np.asarray(x, dtype=float), tap=True)
        obs = None
        verdicts = []
        for det in self.channels:
            if det is None:
                verdicts.append(None)
            elif isinstance(det, LayerMonitor):
                verdicts.append(det.check(trace).verdict)
            else:
                if obs is None:
                    obs = Observation(np.asarray(x, dtype=float)[None, :], logits[None, :],
                                      [t[None, :] for t in trace],
                                      np.asarray([derive_seed(self.seed, sample_index)], dtype=np.int64))
                verdicts.append(det.verdict(det.score_batch(obs)[0]))
        return vote(self.voter, verdicts)


def adversarial_summary(model: MlpModel, det: LoGlrtDetector, dataset: LabeledDataset, count: int = 200) -> dict:
    """LO-GLRT separation of clean ID samples from their white-box UAP copies."""
    from .evaluate import auroc

    clean = dataset.id_only()
    clean_x = clean.samples[:count]
    vec = det.glrt.templates[0].reshape(-1)
    pert_x = clean_x + vec
    s0 = det.glrt.statistic_batch(clean_x)
    s1 = det.glrt.statistic_batch(pert_x)
    labels = clean.labels[:count]
    return {
        "samples": int(len(clean_x)),
        "perturbation": vec.tolist(),
        "auroc": auroc(s0, s1),
        "flagged_clean": int(np.sum(s0 > det.threshold)),
        "flagged_perturbed": int(np.sum(s1 > det.threshold)),
        "accuracy_clean": float(np.mean(model.predict(clean_x) == labels)),
        "accuracy_perturbed": float(np.mean(model.predict(pert_x) == labels)),
    }


def shift_summary(shift: ShiftDetector, dataset: LabeledDataset, sigmas: float, seed: int = 0) -> dict:
    """Check a seeded random ID window as-is and translated by ``sigmas`` reference stds."""
    ids = dataset.id_only().samples
    live = ids[rng(seed, "shift-live").choice(len(ids), size=shift.window, replace=False)]
    out = {"tau": shift.tau, "window": int(len(live))}
    for name, window in (("unshifted", live), ("covariate_shifted", live + sigmas * shift.scale)):
        v = shift.check(window)
        out[name] = {"max_kl": v.score, "shift": v.is_ood}
    out["shift_sigmas"] = sigmas
    return out


def run_evaluation(cfg: RunConfig, model: MlpModel, bundle: Bundle, dataset: LabeledDataset,
                   latency_samples: int = 200):
    from .evaluate import evaluate

    voters = cfg.voter_configs()
    factory = lambda vc: RuntimeMonitor(model, bundle, vc, cfg.seed)  # noqa: E731
    report = evaluate(model, bundle.detectors, voters, dataset, cfg.seed, latency_samples, factory)
    if "lo_glrt" in bundle and len(dataset.id_only()):
        report.extras["adversarial"] = adversarial_summary(model, bundle["lo_glrt"], dataset)
    if bundle.shift is not None and len(dataset.id_only()) >= bundle.shift.window:
        report.extras["shift"] = shift_summary(bundle.shift, dataset, cfg.detectors["shift"]["shift_sigmas"],
                                                cfg.seed)
    report.extras["retention"] = bundle.metadata.get("retention")
    return report
