"""Class-conditional Gaussian with a shared covariance (Mahalanobis score)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import FitError, ShapeError

REG_SCALE = 1e-6
REG_FLOOR = 1e-12
FORMAT_VERSION = 1


def regularized_inverse(cov: np.ndarray):
    """Return ``(eps, regularized, precision)`` for a symmetric covariance.

    ``eps = 1e-6 * trace / dim`` (floored at 1e-12) is added to the diagonal
    only when the smallest eigenvalue falls below it; a well-conditioned
    covariance is inverted as is.
    """
    dim = cov.shape[0]
    eps = max(REG_SCALE * float(np.trace(cov)) / dim, REG_FLOOR)
    if np.linalg.eigvalsh(cov).min() >= eps:
        eps = 0.0
    reg = cov + eps * np.eye(dim)
    try:
        precision = np.linalg.inv(reg)
    except np.linalg.LinAlgError:
        raise FitError("covariance is singular even after regularisation") from None
    if not np.all(np.isfinite(precision)):
        raise FitError("covariance inverse is not finite")
    return eps, reg, precision


class MahalanobisModel:
    """Per-class means plus pooled covariance, inverted once.

    The pooled covariance divides by the total sample count; see
    ``regularized_inverse`` for the ridge applied to near-singular fits.
    """

    def __init__(self, means, covariance, layer: int = -1):
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        self.layer = int(layer)
        dim = self.means.shape[1]
        if self.covariance.shape != (dim, dim):
            raise ShapeError("covariance does not match mean dimension")
        if not np.all(np.isfinite(self.covariance)):
            raise FitError("covariance is not finite")
        self.epsilon, self.regularized, self.precision = regularized_inverse(self.covariance)

    @classmethod
    def fit(cls, class_samples: Sequence, layer: int = -1) -> "MahalanobisModel":
        groups = [np.atleast_2d(np.asarray(g, dtype=float)) for g in class_samples]
        if not groups:
            raise FitError("no classes given")
        for c, g in enumerate(groups):
            if len(g) < 2:
                raise FitError(f"class {c} has fewer than two samples")
        dim = groups[0].shape[1]
        if any(g.shape[1] != dim for g in groups):
            raise ShapeError("classes disagree on feature dimension")
        means = np.stack([g.mean(axis=0) for g in groups])
        centered = np.concatenate([g - m for g, m in zip(groups, means)])
        cov = centered.T @ centered / len(centered)
        return cls(means, (cov + cov.T) / 2.0, layer)

    @classmethod
    def fit_labeled(cls, X, y, layer: int = -1) -> "MahalanobisModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        return cls.fit([X[y == c] for c in np.unique(y)], layer)

    def distances(self, F) -> np.ndarray:
        """Squared Mahalanobis distance of each row to each class mean."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[1] != self.means.shape[1]:
            raise ShapeError(f"expected {self.means.shape[1]} features, got {F.shape[1]}")
        diff = F[:, None, :] - self.means[None, :, :]
        return np.einsum("ncd,de,nce->nc", diff, self.precision, diff)

    def score_samples(self, F) -> np.ndarray:
        return np.maximum(self.distances(F).min(axis=1), 0.0)

    def score(self, feature) -> float:
        return float(self.score_samples(np.asarray(feature, dtype=float)[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "type": "mahalanobis",
            "version": FORMAT_VERSION,
            "layer": self.layer,
            "means": self.means.tolist(),
            "covariance": self.covariance.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MahalanobisModel":
        return cls(d["means"], d["covariance"], d["layer"])
