"""End-to-end evaluation: confusion counts per detector and per voter.

Positive class is OOD throughout: FP is an ID sample flagged OOD, FN an OOD
sample that slipped through.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..detectors import Detector, Observation
from ..detectors.channels import _class_probs
from ..errors import CalibrationError, ConfigurationError, InvariantViolation
from ..model import MlpModel
from ..seeding import derive_seed
from ..voter import VoterConfig, vote_counts
from .analysis import overconfidence
from .data import LabeledDataset


@dataclass
class Confusion:
    TP: int
    FP: int
    TN: int
    FN: int

    @classmethod
    def from_flags(cls, flagged, is_ood) -> "Confusion":
        flagged = np.asarray(flagged, dtype=bool)
        is_ood = np.asarray(is_ood, dtype=bool)
        return cls(int(np.sum(flagged & is_ood)), int(np.sum(flagged & ~is_ood)),
                   int(np.sum(~flagged & ~is_ood)), int(np.sum(~flagged & is_ood)))

    @property
    def recall(self) -> Optional[float]:
        pos = self.TP + self.FN
        return self.TP / pos if pos else None

    @property
    def fpr(self) -> Optional[float]:
        neg = self.FP + self.TN
        return self.FP / neg if neg else None

    def to_dict(self) -> dict:
        return {"TP": self.TP, "FP": self.FP, "TN": self.TN, "FN": self.FN,
                "recall": self.recall, "fpr": self.fpr}


def auroc(negative_scores, positive_scores) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counting half."""
    neg = np.asarray(negative_scores, dtype=float)
    pos = np.asarray(positive_scores, dtype=float)
    if len(neg) == 0 or len(pos) == 0:
        raise ValueError("AUROC needs both classes")
    allv = np.concatenate([neg, pos])
    order = np.argsort(allv, kind="mergesort")
    ranks = np.empty(len(allv))
    sorted_v = allv[order]
    i = 0
    while i < len(sorted_v):
        j = i
        while j + 1 < len(sorted_v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    r_pos = ranks[len(neg):].sum()
    return float((r_pos - len(pos) * (len(pos) + 1) / 2.0) / (len(pos) * len(neg)))


@dataclass
class EvalReport:
    n_id: int
    n_ood: int
    seed: int
    detectors: dict            # id -> {confusion..., threshold, eligible}
    voters: dict               # name -> {confusion..., config}
    extras: dict = field(default_factory=dict)
    latency: dict = field(default_factory=dict)
    # in-memory only, for figures
    scores: dict = field(default_factory=dict, repr=False)
    flags: dict = field(default_factory=dict, repr=False)
    is_ood: Optional[np.ndarray] = field(default=None, repr=False)
    inputs: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self, include_latency: bool = False) -> dict:
        out = {
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "seed": self.seed,
            "thresholds": {k: v["threshold"] for k, v in self.detectors.items()},
            "detectors": self.detectors,
            "voters": self.voters,
            "extras": self.extras,
        }
        if include_latency:
            out["latency"] = self.latency
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def csv_rows(self) -> list:
        rows = []
        for kind, table in (("detector", self.detectors), ("voter", self.voters)):
            for name, d in table.items():
                rows.append({"kind": kind, "name": name, "TP": d["TP"], "FP": d["FP"], "TN": d["TN"],
                             "FN": d["FN"], "recall": d["recall"], "fpr": d["fpr"],
                             "eligible": d.get("eligible", "")})
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, ["kind", "name", "TP", "FP", "TN", "FN", "recall", "fpr", "eligible"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.csv_rows())
        return buf.getvalue()


def check_voter_identities(voters: list, flags: dict, is_ood) -> None:
    """Assert the counting identities every koon family must satisfy.

    For voters over the same channels, raising k can only shrink the flag set;
    a 1-out-of-n voter misses nothing any channel catches and flags everything
    any channel flags.
    """
    is_ood = np.asarray(is_ood, dtype=bool)
    for a in voters:
        fa = flags[a.name]
        ca = Confusion.from_flags(fa, is_ood)
        if a.k == 1:
            for ch in a.channels:
                cc = Confusion.from_flags(flags[ch], is_ood)
                if ca.FN > cc.FN or ca.FP < cc.FP:
                    raise InvariantViolation(f"{a.name} vs channel {ch}: FN/FP identity violated")
        for b in voters:
            if a is b or set(a.channels) != set(b.channels) or a.k >= b.k:
                continue
            fb = flags[b.name]
            if np.any(fb & ~fa):
                raise InvariantViolation(f"{b.name} flags a sample {a.name} does not")
            cb = Confusion.from_flags(fb, is_ood)
            if ca.FN > cb.FN or ca.FP < cb.FP:
                raise InvariantViolation(f"{a.name}/{b.name}: FN/FP monotonicity violated")


def _unique_names(voters: list) -> list:
    names = [v.name for v in voters]
    out = []
    for v, n in zip(voters, names):
        out.append(n if names.count(n) == 1 else f"{n}[{','.join(v.channels)}]")
    return out


def evaluate(model: MlpModel, detectors: list, voter_configs: list, dataset: LabeledDataset,
             seed: int = 0, latency_samples: int = 200, monitor_factory=None) -> EvalReport:
    """Score every sample with every detector, vote, and count.

    ``monitor_factory(voter)`` optionally builds the single-sample runtime path
    whose wall-clock latency is measured on the first ``latency_samples`` rows.
    """
    for det in detectors:
        if not det.calibrated:
            raise CalibrationError(f"detector {det.detector_id!r} is not calibrated")
    by_id = {d.detector_id: d for d in detectors}
    is_ood = np.asarray(dataset.is_ood, dtype=bool)
    seeds = [derive_seed(seed, "sample", i) for i in range(len(dataset))]
    obs = Observation.compute(model, dataset.samples, seeds)

    scores, flags, det_table = {}, {}, {}
    for det in detectors:
        s = det.score_batch(obs)
        verdicts = [det.verdict(v) for v in s]
        f = np.array([v.is_ood for v in verdicts], dtype=bool)
        scores[det.detector_id], flags[det.detector_id] = s, f
        entry = Confusion.from_flags(f, is_ood).to_dict()
        entry.update(threshold=det.threshold, eligible=det.voter_eligible, type=det.kind)
        det_table[det.detector_id] = entry

    voter_table = {}
    names = _unique_names(voter_configs)
    named = []
    for vc, name in zip(voter_configs, names):
        for ch in vc.channels:
            if ch not in by_id:
                raise ConfigurationError(f"voter channel {ch!r} has no fitted detector")
            if not by_id[ch].voter_eligible:
                raise ConfigurationError(f"detector {ch!r} is not eligible to vote")
        mat = np.stack([flags[ch] for ch in vc.channels], axis=1)
        f = vote_counts(vc.k, mat)
        flags[name] = f
        entry = Confusion.from_flags(f, is_ood).to_dict()
        entry["config"] = vc.to_dict()
        voter_table[name] = entry
        named.append(_Named(vc, name))
    check_voter_identities(named, flags, is_ood)

    report = EvalReport(int((~is_ood).sum()), int(is_ood.sum()), int(seed), det_table, voter_table,
                        scores=scores, flags=flags, is_ood=is_ood, inputs=dataset.samples)
    report.extras["overconfidence"] = _overconfidence_summary(model, obs, dataset)

    if monitor_factory is not None and latency_samples > 0:
        report.latency = measure_latency(monitor_factory, voter_configs[0], dataset, latency_samples, seed)
    return report


@dataclass(frozen=True)
class _Named:
    config: VoterConfig
    name: str

    @property
    def k(self):
        return self.config.k

    @property
    def channels(self):
        return self.config.channels


def _overconfidence_summary(model: MlpModel, obs: Observation, dataset: LabeledDataset) -> dict:
    """Treat 'ID' as the positive class and softmax trust (top prob >= 0.5) as the prediction."""
    probs = _class_probs(model, obs.logits)
    trusted = probs.max(axis=1) >= 0.5
    is_id = ~np.asarray(dataset.is_ood, dtype=bool)
    correct = is_id & (probs.argmax(axis=1) == dataset.labels)
    model_acc = float(probs.max(axis=1).mean()) if len(probs) else 0.0
    true_acc = float(correct.mean()) if len(probs) else 0.0
    rep = overconfidence(int(is_id.sum()), int((~is_id).sum()), int((trusted & is_id).sum()),
                         int((trusted & ~is_id).sum()), model_acc, true_acc)
    return rep.to_dict()


def measure_latency(monitor_factory, voter: VoterConfig, dataset: LabeledDataset, count: int, seed: int) -> dict:
    monitor = monitor_factory(voter)
    times = []
    for i, x in enumerate(dataset.samples[:count]):
        t0 = time.perf_counter()
        monitor.process(x, i)
        times.append(time.perf_counter() - t0)
    t = np.asarray(times) * 1e3
    return {"voter": voter.name, "samples": len(t), "median_ms": float(np.median(t)),
            "p99_ms": float(np.quantile(t, 0.99)), "max_ms": float(t.max())}
