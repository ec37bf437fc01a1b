"""Small feed-forward classifier: the monitored AI element.

Weights are stored as ``(fan_in, fan_out)`` matrices so a layer computes
``a @ W + b``. Hidden layers use relu or tanh; the output layer is linear
(logits). Dropout is inverted dropout on hidden activations only, so a
forward pass without dropout needs no rescaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidInputError,
    InvalidParameterError,
    ShapeError,
)
from .seeding import derive_seed

ACTIVATIONS = ("relu", "tanh")


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------

def _as_logits(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise InvalidInputError("logits must have at least one component")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    return z


def softmax(logits) -> np.ndarray:
    """Overflow-safe softmax along the last axis."""
    z = _as_logits(logits)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_temperature(logits, T: float) -> np.ndarray:
    if not (np.isfinite(T) and T > 0):
        raise InvalidParameterError(f"temperature must be positive, got {T!r}")
    return softmax(_as_logits(logits) / T)


def reject_probabilities(logits, reject_index: Optional[int]) -> np.ndarray:
    """Softmax over every logit including the reject logit.

    ``reject_index`` designates which component is P(reject); passing None
    (a model without a reject head) is a configuration error.
    """
    z = _as_logits(logits)
    if reject_index is None:
        raise ConfigurationError("no reject logit designated")
    if z.shape[-1] < 2 or not -z.shape[-1] <= reject_index < z.shape[-1]:
        raise ConfigurationError(f"reject index {reject_index} invalid for {z.shape[-1]} logits")
    return softmax(z)


def entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=-1)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class MlpModel:
    layer_sizes: list
    weights: list
    biases: list
    hidden_activation: str = "relu"
    has_reject_class: bool = False
    dropout_rate: float = 0.0
    temperature: float = 1.0
    seed: int = 0
    trained: bool = False

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ConfigurationError(f"bad layer sizes {self.layer_sizes}")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("need one weight matrix and bias per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {expect}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.hidden_activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidParameterError("dropout_rate must lie in [0, 1)")
        if not self.temperature > 0:
            raise InvalidParameterError("temperature must be positive")
        if self.has_reject_class and self.layer_sizes[-1] < 2:
            raise ConfigurationError("a reject head needs at least two outputs")

    @classmethod
    def create(cls, layer_sizes: Sequence[int], seed: int = 0, **kwargs) -> "MlpModel":
        """Glorot-uniform initialised model, zero biases."""
        rng = np.random.default_rng(derive_seed(seed, "init"))
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            r = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases, seed=seed, **kwargs)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def reject_index(self) -> Optional[int]:
        return self.n_outputs - 1 if self.has_reject_class else None

    @property
    def n_classes(self) -> int:
        """Number of in-distribution classes (reject logit excluded)."""
        return self.n_outputs - (1 if self.has_reject_class else 0)

    def _activate(self, z):
        return np.maximum(z, 0.0) if self.hidden_activation == "relu" else np.tanh(z)

    def _check_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_inputs:
            raise ShapeError(f"input dimension {X.shape[-1]} != {self.n_inputs}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("input must be finite")
        return X

    def _propagate(self, A, masks=None):
        """Run the layers on a 2-D batch, returning every post-activation output."""
        outs = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            A = A @ w + b
            if i < last:
                A = self._activate(A)
                if masks is not None:
                    A = A * masks[i]
            outs.append(A)
        return outs

    def _dropout_masks(self, rng, batch: int):
        keep = 1.0 - self.dropout_rate
        return [
            (rng.random((batch, width)) < keep) / keep
            for width in self.layer_sizes[1:-1]
        ]

    def forward(self, x, tap: bool = False, dropout_active: bool = False, rng_seed: int = 0):
        """Single-sample forward pass.

        Returns ``(logits, trace)``; ``trace`` is the list of post-activation
        vectors for every layer (hidden layers then logits) when ``tap`` is set,
        else None.
        """
        x = self._check_inputs(x)
        if x.ndim != 1:
            raise ShapeError("forward expects a single input vector")
        masks = None
        if dropout_active and self.dropout_rate > 0:
            masks = self._dropout_masks(np.random.default_rng(int(rng_seed)), 1)
        outs = self._propagate(x[None, :], masks)
        logits = outs[-1][0]
        trace = [o[0] for o in outs] if tap else None
        return logits, trace

    def forward_batch(self, X):
        """Deterministic batch pass; returns ``(logits, trace)`` with 2-D arrays."""
        X = self._check_inputs(X)
        if X.ndim != 2:
            raise ShapeError("forward_batch expects a 2-D array")
        outs = self._propagate(X)
        return outs[-1], outs

    def predict(self, X) -> np.ndarray:
        logits, _ = self.forward_batch(X)
        return np.argmax(logits, axis=1)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.hidden_activation,
            "has_reject_class": bool(self.has_reject_class),
            "dropout_rate": float(self.dropout_rate),
            "temperature": float(self.temperature),
            "seed": int(self.seed),
            "trained": bool(self.trained),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        try:
            return cls(
                layer_sizes=d["layer_sizes"],
                weights=d["weights"],
                biases=d["biases"],
                hidden_activation=d.get("activation", "relu"),
                has_reject_class=bool(d.get("has_reject_class", False)),
                dropout_rate=float(d.get("dropout_rate", 0.0)),
                temperature=float(d.get("temperature", 1.0)),
                seed=int(d.get("seed", 0)),
                trained=bool(d.get("trained", False)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"model document missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def copy(self) -> "MlpModel":
        return replace(
            self,
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9


def _check_labels(model: MlpModel, X, y):
    X = model._check_inputs(X)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise InvalidInputError("training set is empty")
    if y.shape != (len(X),):
        raise ShapeError("labels must be one per sample")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InvalidInputError("labels must be integers")
        y = y.astype(int)
    if y.min() < 0 or y.max() >= model.n_outputs:
        raise InvalidInputError(f"labels must lie in [0, {model.n_outputs})")
    return X, y


def _cross_entropy(logits, y) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logsum - z[np.arange(len(y)), y]))


def loss(model: MlpModel, X, y) -> float:
    """Mean cross-entropy without dropout."""
    X, y = _check_labels(model, X, y)
    logits, _ = model.forward_batch(X)
    return _cross_entropy(logits, y)


def _backprop(model: MlpModel, X, y, masks=None, want_input=False):
    outs = model._propagate(X, masks)
    n = len(X)
    delta = softmax(outs[-1])
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        a_prev = X if i == 0 else outs[i - 1]
        grads_w[i] = a_prev.T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i == 0 and not want_input:
            break
        delta = delta @ model.weights[i].T
        if i == 0:
            break
        if masks is not None:
            delta = delta * masks[i - 1]
        pre = outs[i - 1]
        if model.hidden_activation == "relu":
            delta = delta * (pre > 0)
        else:
            # outs holds post-mask values; undo the mask to recover tanh(z)
            t = pre if masks is None else np.divide(pre, masks[i - 1], out=np.zeros_like(pre), where=masks[i - 1] != 0)
            delta = delta * (1.0 - t * t)
    return _cross_entropy(outs[-1], y), grads_w, grads_b, (delta if want_input else None)


def gradients(model: MlpModel, X, y):
    """Analytic cross-entropy gradients ``(loss, dW list, db list)``, dropout off."""
    X, y = _check_labels(model, X, y)
    value, gw, gb, _ = _backprop(model, X, y)
    return value, gw, gb


def input_gradient(model: MlpModel, X, y) -> np.ndarray:
    """Gradient of the mean loss with respect to each input row."""
    X, y = _check_labels(model, X, y)
    _, _, _, dx = _backprop(model, X, y, want_input=True)
    return dx


def train(model: MlpModel, X, y, hyper: Optional[TrainConfig] = None):
    """Minibatch SGD with momentum on mean cross-entropy.

    Returns ``(trained_model, losses)`` where ``losses[0]`` is the loss before
    the first update and ``losses[e]`` the full-set loss after epoch ``e``.
    The input model is not modified.
    """
    hyper = hyper or TrainConfig()
    X, y = _check_labels(model, X, y)
    if hyper.epochs < 0 or hyper.batch_size < 1 or hyper.learning_rate <= 0:
        raise InvalidParameterError("epochs >= 0, batch_size >= 1, learning_rate > 0 required")
    out = model.copy()
    vel_w = [np.zeros_like(w) for w in out.weights]
    vel_b = [np.zeros_like(b) for b in out.biases]
    losses = [loss(out, X, y)]
    n = len(X)
    for epoch in range(hyper.epochs):
        order = np.random.default_rng(derive_seed(hyper.seed, "shuffle", epoch)).permutation(n)
        for bi, start in enumerate(range(0, n, hyper.batch_size)):
            idx = order[start:start + hyper.batch_size]
            masks = None
            if out.dropout_rate > 0:
                masks = out._dropout_masks(
                    np.random.default_rng(derive_seed(hyper.seed, "dropout", epoch, bi)), len(idx)
                )
            _, gw, gb, _ = _backprop(out, X[idx], y[idx], masks)
            for i in range(len(out.weights)):
                vel_w[i] = hyper.momentum * vel_w[i] - hyper.learning_rate * gw[i]
                vel_b[i] = hyper.momentum * vel_b[i] - hyper.learning_rate * gb[i]
                out.weights[i] = out.weights[i] + vel_w[i]
                out.biases[i] = out.biases[i] + vel_b[i]
        losses.append(loss(out, X, y))
    if hyper.epochs > 0:
        out.trained = True
    return out, losses


# ---------------------------------------------------------------------------
# uncertainty estimation
# ---------------------------------------------------------------------------

@dataclass
class McDropoutResult:
    samples: np.ndarray
    mean: np.ndarray
    variance: np.ndarray


def mc_dropout_predict(model: MlpModel, x, n_samples: int, seed: int = 0) -> McDropoutResult:
    """Average class probabilities over ``n_samples`` dropout passes.

    Pass ``t`` uses the dropout seed ``derive_seed(seed, t)``.
    """
    if n_samples < 1:
        raise InvalidParameterError("need at least one dropout pass")
    probs = np.empty((n_samples, model.n_outputs))
    for t in range(n_samples):
        logits, _ = model.forward(x, dropout_active=True, rng_seed=derive_seed(seed, t))
        probs[t] = softmax(logits)
    mean = probs.mean(axis=0)
    # shifted-data variance: identical passes give exactly zero
    d = probs - probs[0]
    variance = np.maximum((d * d).mean(axis=0) - d.mean(axis=0) ** 2, 0.0)
    return McDropoutResult(probs, mean, variance)


@dataclass
class EnsembleSpec:
    members: list
    weights: list = field(default=None)

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("ensemble needs at least one member")
        if self.weights is None:
            self.weights = [1.0] * len(self.members)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.members),):
            raise ConfigurationError("one weight per member required")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidParameterError("ensemble weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise InvalidParameterError("ensemble weights are all zero")
        first = self.members[0]
        for m in self.members[1:]:
            if m.n_inputs != first.n_inputs or m.n_outputs != first.n_outputs:
                raise ShapeError("ensemble members disagree on input/output dimensions")
        self.weights = w


@dataclass
class EnsemblePrediction:
    combined: np.ndarray
    members: np.ndarray
    disagreement: float


def ensemble_predict(spec: EnsembleSpec, x) -> EnsemblePrediction:
    """Weighted per-class average of member softmax confidences."""
    conf = np.stack([softmax(m.forward(x)[0]) for m in spec.members])
    w = spec.weights
    combined = (w[:, None] * conf).sum(axis=0) / w.sum()
    disagreement = float(conf.std(axis=0).max())
    return EnsemblePrediction(combined, conf, disagreement)
