"""Overconfidence indicators and first-order error-cascade analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class OverconfidenceReport:
    P: int
    N: int
    TP: int
    FP: int
    predicts_beyond_positives: bool     # TP + FP > P
    misses_positives: bool              # TP < P
    is_overconfident: bool
    model_acc: float
    true_acc: float
    confidence_index: Optional[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def overconfidence(P: int, N: int, TP: int, FP: int, model_acc: float, true_acc: float) -> OverconfidenceReport:
    """Both overconfidence conditions plus the naive confidence index.

    ``confidence_index = 1 + (model_acc - true_acc) / (model_acc + true_acc)``;
    it is None when both accuracies are zero.
    """
    for name, v in (("P", P), ("N", N), ("TP", TP), ("FP", FP)):
        if int(v) != v or v < 0:
            raise InvalidInputError(f"{name} must be a nonnegative integer")
    if TP > P or FP > N:
        raise InvalidInputError("counts inconsistent: need TP <= P and FP <= N")
    for name, v in (("model_acc", model_acc), ("true_acc", true_acc)):
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{name} must lie in [0, 1]")
    beyond = TP + FP > P
    misses = TP < P
    denom = model_acc + true_acc
    index = None if denom == 0 else 1.0 + (model_acc - true_acc) / denom
    return OverconfidenceReport(int(P), int(N), int(TP), int(FP), beyond, misses, beyond and misses,
                                float(model_acc), float(true_acc), index)


# ---------------------------------------------------------------------------
# error cascade
# ---------------------------------------------------------------------------

@dataclass
class ActionFunction:
    """State-to-action map. Built-in kinds carry exact gradients.

    linear:    F(X) = coef . X + intercept
    quadratic: F(X) = sum_i quad_i X_i^2 + coef . X + intercept
    """

    kind: str
    params: dict = field(default_factory=dict)
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic", "custom"):
            raise InvalidParameterError(f"unknown action function kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise InvalidParameterError("custom action function needs a callable")

    def _coef(self, dim):
        coef = np.asarray(self.params.get("coef", np.zeros(dim)), dtype=float)
        if coef.shape != (dim,):
            raise InvalidParameterError(f"coef must have {dim} entries")
        return coef

    def _quad(self, dim):
        quad = np.asarray(self.params.get("quad", np.zeros(dim)), dtype=float)
        if quad.shape != (dim,):
            raise InvalidParameterError(f"quad must have {dim} entries")
        return quad

    def __call__(self, X) -> float:
        X = np.asarray(X, dtype=float)
        if self.kind == "custom":
            return float(self.func(X))
        value = float(self._coef(len(X)) @ X) + float(self.params.get("intercept", 0.0))
        if self.kind == "quadratic":
            value += float(self._quad(len(X)) @ (X * X))
        return value

    def gradient(self, X) -> Optional[np.ndarray]:
        X = np.asarray(X, dtype=float)
        if self.kind == "custom":
            return None
        grad = self._coef(len(X)).copy()
        if self.kind == "quadratic":
            grad = grad + 2.0 * self._quad(len(X)) * X
        return grad

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: (list(v) if isinstance(v, (list, tuple, np.ndarray)) else v)
                                      for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionFunction":
        d = dict(d)
        return cls(d.pop("kind"), d)


@dataclass
class CascadeAnalysis:
    function: dict
    X: list
    dX: list
    sensitivities: list
    fd_sensitivities: list
    analytic: bool
    max_fd_rel_error: Optional[float]
    dA: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def exact_dot(a, b) -> float:
    """Dot product rounded once (exact rational accumulation)."""
    return float(sum((Fraction(float(x)) * Fraction(float(y)) for x, y in zip(a, b)), Fraction(0)))


def error_cascade(F: ActionFunction, X, dX, fd_step: float = 1e-4) -> CascadeAnalysis:
    """Propagate state errors to the action: ``dA = sum_i dF/dX_i * dX_i``.

    Sensitivities come from central differences; for built-in kinds the exact
    gradient is used for ``dA`` and the finite-difference error is reported.
    """
    X = np.asarray(X, dtype=float)
    dX = np.asarray(dX, dtype=float)
    if X.shape != dX.shape or X.ndim != 1:
        raise InvalidInputError("X and dX must be vectors of equal length")
    if not fd_step > 0:
        raise InvalidParameterError("fd_step must be positive")
    fd = np.empty(len(X))
    for i in range(len(X)):
        e = np.zeros(len(X))
        e[i] = fd_step
        hi, lo = F(X + e), F(X - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise InvalidInputError("action function is not finite near X")
        fd[i] = (hi - lo) / (2.0 * fd_step)
    exact = F.gradient(X)
    sens = fd if exact is None else exact
    rel = None
    if exact is not None:
        scale = np.maximum(np.abs(exact), 1e-300)
        rel = float(np.max(np.where(exact == 0, np.abs(fd), np.abs(fd - exact) / scale))) if len(X) else 0.0
    return CascadeAnalysis(F.to_dict(), X.tolist(), dX.tolist(), sens.tolist(), fd.tolist(),
                           exact is not None, rel, exact_dot(sens, dX))
