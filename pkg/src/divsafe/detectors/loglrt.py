"""Locally optimal GLRT statistic for universal-perturbation detection.

The input vector is cut into ``n`` equal subvectors that are modelled as draws
from one common Gaussian surrogate ``N(mu, Sigma)``. For candidate
perturbation templates ``h_t`` (also cut into ``n`` parts) the statistic is

    U(x) = max_t  sum_i  h_{i,t}^T Sigma^{-1} (x_i - mu)
"""

from __future__ import annotations

import numpy as np

from ..errors import FitError, InvalidParameterError, ShapeError
from .mahalanobis import regularized_inverse

FORMAT_VERSION = 1


def split_subvectors(X, n_subvectors: int) -> np.ndarray:
    """Reshape ``(m, d)`` rows into ``(m, n, d/n)`` subvectors."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    if n_subvectors < 1 or d % n_subvectors:
        raise ShapeError(f"cannot split dimension {d} into {n_subvectors} subvectors")
    return X.reshape(len(X), n_subvectors, d // n_subvectors)


class LoGlrtModel:
    def __init__(self, n_subvectors: int, templates, mean, covariance):
        self.n_subvectors = int(n_subvectors)
        self.templates = np.asarray(templates, dtype=float)
        if self.templates.ndim != 3 or len(self.templates) == 0:
            raise InvalidParameterError("templates must be a nonempty (T, n, m) array")
        self.mean = np.asarray(mean, dtype=float)
        self.covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        m = self.mean.shape[0]
        if self.templates.shape[1:] != (self.n_subvectors, m) or self.covariance.shape != (m, m):
            raise ShapeError("template, mean and covariance dimensions disagree")
        _, _, self.precision = regularized_inverse(self.covariance)
        # h_{i,t}^T Sigma^{-1}, precomputed
        self._projected = self.templates @ self.precision

    @classmethod
    def fit(cls, clean, templates, n_subvectors: int = 1) -> "LoGlrtModel":
        """Estimate the common surrogate from clean inputs.

        ``templates`` holds full-length perturbation vectors, one per row.
        """
        parts = split_subvectors(clean, n_subvectors)
        pooled = parts.reshape(-1, parts.shape[2])
        if len(pooled) < 2:
            raise FitError("need at least two clean subvectors")
        mean = pooled.mean(axis=0)
        centered = pooled - mean
        cov = centered.T @ centered / len(pooled)
        tmpl = split_subvectors(np.atleast_2d(templates), n_subvectors)
        return cls(n_subvectors, tmpl, mean, (cov + cov.T) / 2.0)

    def statistic_batch(self, X) -> np.ndarray:
        parts = split_subvectors(X, self.n_subvectors)
        if parts.shape[2] != self.mean.shape[0]:
            raise ShapeError("subvector dimension differs from the surrogate")
        centered = parts - self.mean
        per_template = np.einsum("tim,nim->nt", self._projected, centered)
        return per_template.max(axis=1)

    def statistic(self, x) -> float:
        return float(self.statistic_batch(np.asarray(x, dtype=float)[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "type": "lo_glrt",
            "version": FORMAT_VERSION,
            "n_subvectors": self.n_subvectors,
            "templates": self.templates.tolist(),
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LoGlrtModel":
        return cls(d["n_subvectors"], d["templates"], d["mean"], d["covariance"])
