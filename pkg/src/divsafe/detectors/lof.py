"""Local outlier factor against a fixed reference set.

Neighbourhoods are tie-inclusive: every reference point within the k-distance
belongs to N_k, so |N_k| can exceed k. Distances within a relative 1e-9 of the
k-distance count as ties, which keeps the neighbourhood stable on lattice-like
data where equal distances differ only in the last bits.
"""

from __future__ import annotations

import numpy as np

from ..errors import FitError, InvalidParameterError, ShapeError

TIE_RTOL = 1e-9
DENSITY_FLOOR = 1e-12
FORMAT_VERSION = 1


def pairwise_distances(A: np.ndarray, B: np.ndarray, block: int = 256) -> np.ndarray:
    out = np.empty((len(A), len(B)))
    for start in range(0, len(A), block):
        diff = A[start:start + block, None, :] - B[None, :, :]
        out[start:start + block] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _lrd(dist: np.ndarray, k: int, ref_kdist: np.ndarray):
    """Local reachability density from a (queries x reference) distance matrix."""
    kdist = np.partition(dist, k - 1, axis=1)[:, k - 1]
    members = dist <= kdist[:, None] * (1.0 + TIE_RTOL)
    reach = np.maximum(ref_kdist[None, :], dist)
    mean_reach = np.where(members, reach, 0.0).sum(axis=1) / members.sum(axis=1)
    lrd = 1.0 / np.maximum(mean_reach, DENSITY_FLOOR)
    return np.maximum(lrd, DENSITY_FLOOR), kdist, members


class LocalOutlierFactor:
    """LOF scorer; ~1 for inliers, > 1 for points sparser than their neighbours."""

    def __init__(self, k: int = 20):
        if k < 1:
            raise InvalidParameterError("k must be positive")
        self.k = int(k)
        self.reference = None

    def fit(self, reference) -> "LocalOutlierFactor":
        R = np.asarray(reference, dtype=float)
        if R.ndim != 2 or len(R) == 0:
            raise FitError("LOF needs a nonempty 2-D reference set")
        if self.k >= len(R):
            raise FitError(f"k={self.k} must be smaller than the reference count {len(R)}")
        self.reference = R
        dist = pairwise_distances(R, R)
        np.fill_diagonal(dist, np.inf)
        kdist = np.partition(dist, self.k - 1, axis=1)[:, self.k - 1]
        self.k_distance = kdist
        self.lrd, _, _ = _lrd(dist, self.k, kdist)
        return self

    def score_samples(self, X) -> np.ndarray:
        if self.reference is None:
            raise FitError("LOF is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.reference.shape[1]:
            raise ShapeError(f"expected {self.reference.shape[1]} features, got {X.shape[1]}")
        dist = pairwise_distances(X, self.reference)
        lrd_q, _, members = _lrd(dist, self.k, self.k_distance)
        neighbour_lrd = (members * self.lrd[None, :]).sum(axis=1) / members.sum(axis=1)
        return neighbour_lrd / lrd_q

    def score(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.ndim != 1:
            raise ShapeError("score expects a single vector")
        return float(self.score_samples(point[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "type": "lof",
            "version": FORMAT_VERSION,
            "k": self.k,
            "reference": self.reference.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LocalOutlierFactor":
        return cls(d["k"]).fit(d["reference"])
