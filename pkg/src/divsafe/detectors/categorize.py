"""Batch ID/OOD categorisation with OOD-class assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError, InvalidParameterError
from ..model import MlpModel, softmax


@dataclass(frozen=True)
class Categorization:
    membership: str                 # "ID" or "OOD"
    p_id: float
    ood_score: Optional[float] = None
    ood_class: Optional[int] = None


def categorize(p_id: float, p_c, lam: float = 1.0, threshold: float = 0.5) -> Categorization:
    """Decide one sample from its ID probability and per-OOD-class scores.

    ``lam`` scales the reported OOD score ``lam * (1 - p_id)``. Ties between
    OOD classes go to the lowest index.
    """
    if p_id >= threshold:
        return Categorization("ID", float(p_id))
    p_c = np.asarray(p_c, dtype=float)
    return Categorization("OOD", float(p_id), float(lam * (1.0 - p_id)), int(np.argmax(p_c)))


def id_probability(model: MlpModel, logits) -> np.ndarray:
    """Largest non-reject component of the full softmax."""
    p = softmax(logits)
    if model.has_reject_class:
        p = np.delete(p, model.reject_index, axis=-1)
    return p.max(axis=-1)


def categorize_batch(
    model: MlpModel,
    batch,
    k: int = 1,
    lam: float = 1.0,
    p_id_threshold: float = 0.5,
    ood_scorer: Optional[Callable] = None,
) -> list:
    """Categorise every row of ``batch`` as ID or OOD(c).

    ``ood_scorer(probabilities) -> k scores`` supplies the per-OOD-class
    probabilities. Without one the model's single reject probability is the
    only OOD class, so ``k`` must be 1.
    """
    if k <= 0:
        raise InvalidParameterError("number of OOD classes must be positive")
    if lam <= 0:
        raise InvalidParameterError("lambda must be positive")
    X = np.atleast_2d(np.asarray(batch, dtype=float)) if len(batch) else np.zeros((0, model.n_inputs))
    if len(X) == 0:
        return []
    if ood_scorer is None:
        if not model.has_reject_class:
            raise ConfigurationError("no reject head and no OOD-class scorer supplied")
        if k != 1:
            raise ConfigurationError("a single reject head provides exactly one OOD class")
        ood_scorer = lambda p: p[[model.reject_index]]  # noqa: E731

    logits, _ = model.forward_batch(X)
    probs = softmax(logits)
    p_id = id_probability(model, logits)
    out = []
    for row, pid in zip(probs, p_id):
        scores = np.asarray(ood_scorer(row), dtype=float)
        if pid < p_id_threshold and scores.shape != (k,):
            raise ConfigurationError(f"OOD scorer returned {scores.shape}, expected ({k},)")
        out.append(categorize(pid, scores, lam, p_id_threshold))
    return out
