"""Fit/calibrate/score wrappers that turn detector scores into verdicts.

Every wrapper scores a whole :class:`Observation` (inputs plus the model's
tapped activations) at once, higher meaning more OOD, and is calibrated to a
threshold on held-out ID data. Eligibility for the voter is fixed per kind:
reject class and the IF/LOF layer monitors vote; softmax, temperature and
Mahalanobis are baselines; MC dropout and the ensemble vote only when their
thresholded post-processing is switched on; LO-GLRT is report-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import CalibrationError, ConfigurationError, FitError, ShapeError
from ..model import EnsembleSpec, MlpModel, TrainConfig, mc_dropout_predict, softmax, softmax_temperature, train
from ..seeding import derive_seed
from .calibration import calibrate_threshold
from .isolation_forest import IsolationForest
from .lof import LocalOutlierFactor
from .loglrt import LoGlrtModel
from .mahalanobis import MahalanobisModel
from .verdict import DetectorVerdict


@dataclass
class Observation:
    """Inputs with the model's full activation trace and per-sample seeds."""

    inputs: np.ndarray
    logits: np.ndarray
    trace: list
    seeds: np.ndarray

    @classmethod
    def compute(cls, model: MlpModel, X, seeds=None, base_seed: int = 0) -> "Observation":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        logits, trace = model.forward_batch(X)
        if seeds is None:
            seeds = [derive_seed(base_seed, i) for i in range(len(X))]
        return cls(X, logits, trace, np.asarray(seeds, dtype=np.int64))

    def __len__(self):
        return len(self.inputs)


def _class_probs(model: MlpModel, logits, T: float = 1.0):
    """Softmax over the in-distribution logits only."""
    if model.has_reject_class:
        logits = np.delete(logits, model.reject_index, axis=-1)
    return softmax_temperature(logits, T)


class Detector:
    kind = "base"
    default_eligible = False

    def __init__(self, detector_id: Optional[str] = None, voter_eligible: Optional[bool] = None,
                 threshold: Optional[float] = None):
        self.detector_id = detector_id or self.kind
        self.voter_eligible = self.default_eligible if voter_eligible is None else bool(voter_eligible)
        self.threshold = threshold
        self.model: Optional[MlpModel] = None

    def bind(self, model: MlpModel) -> "Detector":
        self.model = model
        return self

    def fit(self, model: MlpModel, X, y, seed: int = 0) -> "Detector":
        return self.bind(model)

    def score_batch(self, obs: Observation) -> np.ndarray:
        raise NotImplementedError

    def calibrate(self, obs: Observation, retention: float = 0.95) -> float:
        self.threshold = calibrate_threshold(self.score_batch(obs), retention)
        return self.threshold

    @property
    def calibrated(self) -> bool:
        return self.threshold is not None

    def verdict(self, score: float) -> DetectorVerdict:
        if self.threshold is None:
            raise CalibrationError(f"detector {self.detector_id!r} is not calibrated")
        return DetectorVerdict.from_score(self.detector_id, score, self.threshold, self.voter_eligible)

    def verdicts(self, obs: Observation) -> list:
        return [self.verdict(s) for s in self.score_batch(obs)]

    # -- serialization ----------------------------------------------------

    def params(self) -> dict:
        return {}

    def state(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "detector_id": self.detector_id,
            "voter_eligible": self.voter_eligible,
            "threshold": self.threshold,
            "params": self.params(),
            "state": self.state(),
        }

    @classmethod
    def from_dict(cls, d: dict, model: MlpModel) -> "Detector":
        det = cls(detector_id=d["detector_id"], voter_eligible=d["voter_eligible"],
                  threshold=d["threshold"], **d.get("params", {}))
        det.bind(model)
        det.load_state(d.get("state", {}))
        return det

    def load_state(self, state: dict) -> None:
        pass


class RejectClassDetector(Detector):
    kind = "reject_class"
    default_eligible = True

    def bind(self, model):
        if not model.has_reject_class:
            raise ConfigurationError("reject-class detector needs a model with a reject head")
        return super().bind(model)

    def score_batch(self, obs):
        return softmax(obs.logits)[:, self.model.reject_index]


class SoftmaxDetector(Detector):
    """Baseline: one minus the top class probability."""

    kind = "softmax"

    def score_batch(self, obs):
        return 1.0 - _class_probs(self.model, obs.logits).max(axis=1)


class TemperatureDetector(Detector):
    kind = "temperature"

    def __init__(self, temperature: float = 10.0, **kw):
        super().__init__(**kw)
        self.temperature = float(temperature)

    def params(self):
        return {"temperature": self.temperature}

    def score_batch(self, obs):
        return 1.0 - _class_probs(self.model, obs.logits, self.temperature).max(axis=1)


def _check_hidden_layer(model: MlpModel, layer: int) -> int:
    if not 0 <= layer < model.n_hidden:
        raise ConfigurationError(f"layer {layer} is not a hidden layer (model has {model.n_hidden})")
    return layer


def _id_rows(model: MlpModel, X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if model.has_reject_class:
        keep = y != model.reject_index
        X, y = X[keep], y[keep]
    return X, y


class MahalanobisDetector(Detector):
    kind = "mahalanobis"

    def __init__(self, layer: int = -1, **kw):
        super().__init__(**kw)
        self.layer = int(layer)
        self.gda: Optional[MahalanobisModel] = None

    def params(self):
        return {"layer": self.layer}

    def _resolve(self, model):
        return self.layer if self.layer >= 0 else model.n_hidden + self.layer

    def fit(self, model, X, y, seed=0):
        self.bind(model)
        layer = _check_hidden_layer(model, self._resolve(model))
        X, y = _id_rows(model, X, y)
        _, trace = model.forward_batch(X)
        self.gda = MahalanobisModel.fit_labeled(trace[layer], y, layer)
        return self

    def score_batch(self, obs):
        return self.gda.score_samples(obs.trace[self.gda.layer])

    def state(self):
        return self.gda.to_dict()

    def load_state(self, state):
        self.gda = MahalanobisModel.from_dict(state)


class McDropoutDetector(Detector):
    """One minus the top mean class probability over dropout passes."""

    kind = "mc_dropout"

    def __init__(self, n_samples: int = 30, **kw):
        super().__init__(**kw)
        self.n_samples = int(n_samples)

    def params(self):
        return {"n_samples": self.n_samples}

    def score_batch(self, obs):
        out = np.empty(len(obs))
        for i, (x, seed) in enumerate(zip(obs.inputs, obs.seeds)):
            mean = mc_dropout_predict(self.model, x, self.n_samples, int(seed)).mean
            if self.model.has_reject_class:
                mean = np.delete(mean, self.model.reject_index)
            out[i] = 1.0 - mean.max()
        return out


class EnsembleDetector(Detector):
    """Member disagreement (max per-class std of member confidences)."""

    kind = "ensemble"

    def __init__(self, n_members: int = 3, epochs: int = 100, learning_rate: float = 0.05,
                 batch_size: int = 32, weights=None, **kw):
        super().__init__(**kw)
        self.n_members = int(n_members)
        self.epochs = int(epochs)
        self.learning_rate = float(learning_rate)
        self.batch_size = int(batch_size)
        self.weights = None if weights is None else [float(w) for w in weights]
        self.spec: Optional[EnsembleSpec] = None

    def params(self):
        return {"n_members": self.n_members, "epochs": self.epochs, "learning_rate": self.learning_rate,
                "batch_size": self.batch_size, "weights": self.weights}

    def fit(self, model, X, y, seed=0):
        self.bind(model)
        members = []
        for j in range(self.n_members):
            mseed = derive_seed(seed, self.detector_id, "member", j)
            init = MlpModel.create(model.layer_sizes, seed=mseed, hidden_activation=model.hidden_activation,
                                   has_reject_class=model.has_reject_class)
            hyper = TrainConfig(self.learning_rate, self.epochs, self.batch_size, mseed)
            members.append(train(init, X, y, hyper)[0])
        self.spec = EnsembleSpec(members, self.weights)
        return self

    def score_batch(self, obs):
        conf = np.stack([softmax(m.forward_batch(obs.inputs)[0]) for m in self.spec.members])
        return conf.std(axis=0).max(axis=1)

    def state(self):
        return {"members": [m.to_dict() for m in self.spec.members]}

    def load_state(self, state):
        self.spec = EnsembleSpec([MlpModel.from_dict(m) for m in state["members"]], self.weights)


class LoGlrtDetector(Detector):
    """U_n statistic on raw inputs with white-box perturbation templates."""

    kind = "lo_glrt"

    def __init__(self, n_subvectors: int = 1, templates=None, **kw):
        super().__init__(**kw)
        self.n_subvectors = int(n_subvectors)
        self.templates = templates
        self.glrt: Optional[LoGlrtModel] = None

    def params(self):
        return {"n_subvectors": self.n_subvectors}

    def fit(self, model, X, y, seed=0):
        self.bind(model)
        if self.templates is None:
            raise FitError("LO-GLRT needs perturbation templates")
        X, _ = _id_rows(model, X, y)
        self.glrt = LoGlrtModel.fit(X, self.templates, self.n_subvectors)
        return self

    def score_batch(self, obs):
        return self.glrt.statistic_batch(obs.inputs)

    def state(self):
        return self.glrt.to_dict()

    def load_state(self, state):
        self.glrt = LoGlrtModel.from_dict(state)
