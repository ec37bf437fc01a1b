"""Hidden-layer runtime monitor.

One outlier detector (isolation forest or LOF) per tapped hidden layer. A
sample is OOD as soon as any layer's detector flags it; layers are visited from
the output side toward the input because later layers are narrower and cheaper.
The monitor's score is the flagged layer's score divided by that layer's
threshold (or the largest such ratio when nothing flags), so the verdict is
simply ``score > 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CalibrationError, ConfigurationError
from ..seeding import derive_seed
from .calibration import calibrate_threshold
from .channels import Detector, Observation, _check_hidden_layer, _id_rows
from .isolation_forest import IsolationForest
from .lof import LocalOutlierFactor
from .verdict import DetectorVerdict

BACKENDS = {
    "isolation_forest": IsolationForest,
    "lof": LocalOutlierFactor,
}


@dataclass
class MonitorCheck:
    verdict: DetectorVerdict
    evaluated: list          # layer indices in evaluation order


class LayerMonitor(Detector):
    kind = "layer_monitor"
    default_eligible = True

    def __init__(self, backend: str = "isolation_forest", layers=None, backend_params=None, **kw):
        if backend not in BACKENDS:
            raise ConfigurationError(f"unknown monitor backend {backend!r}")
        kw.setdefault("detector_id", backend)
        super().__init__(**kw)
        self.backend = backend
        self.layers = None if layers is None else [int(l) for l in layers]
        self.backend_params = dict(backend_params or {})
        self.backends: dict = {}
        self.layer_thresholds: dict = {}
        if self.threshold is None:
            self.threshold = 1.0

    def params(self):
        return {"backend": self.backend, "layers": self.layers, "backend_params": self.backend_params}

    def bind(self, model):
        super().bind(model)
        if self.layers is None:
            self.layers = list(range(model.n_hidden))
        if not self.layers:
            raise ConfigurationError("monitor taps no layers")
        for l in self.layers:
            _check_hidden_layer(model, l)
        return self

    @property
    def order(self) -> list:
        """Evaluation order: output side first."""
        return sorted(self.layers, reverse=True)

    def fit(self, model, X, y, seed=0):
        self.bind(model)
        X, _ = _id_rows(model, X, y)
        _, trace = model.forward_batch(X)
        self.backends = {}
        for l in self.layers:
            params = dict(self.backend_params)
            if self.backend == "isolation_forest":
                params.setdefault("seed", derive_seed(seed, self.detector_id, l))
            self.backends[l] = BACKENDS[self.backend](**params).fit(trace[l])
        self.layer_thresholds = {}
        return self

    def layer_scores(self, obs: Observation) -> dict:
        missing = [l for l in self.layers if l not in self.backends]
        if missing:
            raise ConfigurationError(f"layers {missing} were never fitted")
        return {l: self.backends[l].score_samples(obs.trace[l]) for l in self.layers}

    def calibrate(self, obs, retention=0.95):
        """Per-layer thresholds at a Bonferroni-split retention.

        With m tapped layers each layer keeps ``1 - (1 - retention) / m`` of
        the ID calibration scores, so the OR over layers keeps at least
        ``retention`` of them.
        """
        per_layer = 1.0 - (1.0 - retention) / len(self.layers)
        scores = self.layer_scores(obs)
        self.layer_thresholds = {l: calibrate_threshold(scores[l], per_layer) for l in self.layers}
        if any(t <= 0 for t in self.layer_thresholds.values()):
            raise CalibrationError("monitor thresholds must be positive")
        self.threshold = 1.0
        return self.threshold

    def _require_calibrated(self):
        if set(self.layer_thresholds) != set(self.layers):
            raise CalibrationError(f"monitor {self.detector_id!r} is not calibrated")

    def score_batch(self, obs):
        self._require_calibrated()
        scores = self.layer_scores(obs)
        ratios = np.stack([scores[l] / self.layer_thresholds[l] for l in self.order], axis=1)
        flagged = ratios > self.threshold
        first = np.argmax(flagged, axis=1)
        any_flag = flagged.any(axis=1)
        return np.where(any_flag, ratios[np.arange(len(ratios)), first], ratios.max(axis=1))

    def check(self, trace) -> MonitorCheck:
        """Single sample with early exit; ``trace`` is one sample's activation list."""
        self._require_calibrated()
        evaluated, best = [], -np.inf
        for l in self.order:
            ratio = self.backends[l].score(np.asarray(trace[l])) / self.layer_thresholds[l]
            evaluated.append(l)
            if ratio > self.threshold:
                return MonitorCheck(self.verdict(ratio), evaluated)
            best = max(best, ratio)
        return MonitorCheck(self.verdict(best), evaluated)

    def state(self):
        return {
            "layers": {str(l): self.backends[l].to_dict() for l in self.layers},
            "layer_thresholds": {str(l): self.layer_thresholds[l] for l in self.layers},
        }

    def load_state(self, state):
        self.backends = {int(l): BACKENDS[self.backend].from_dict(d) for l, d in state["layers"].items()}
        self.layer_thresholds = {int(l): float(t) for l, t in state["layer_thresholds"].items()}
