"""Isolation forest built from scratch.

Each tree isolates points by recursive random axis-aligned splits on a random
subsample. Anomalies end up in short paths, so the anomaly score
``2 ** (-E(h) / c(n))`` approaches 1 for them and stays below 0.5 for dense
regions. ``c(n)`` uses the harmonic approximation ``ln(i) + 0.5772`` for every
``i``, including small ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import FitError, InvalidParameterError, ShapeError
from ..seeding import derive_seed

EULER_GAMMA = 0.5772
FORMAT_VERSION = 1


def harmonic(i: float) -> float:
    return math.log(i) + EULER_GAMMA


def c_factor(n: int) -> float:
    """Average unsuccessful-search path length in a BST of ``n`` nodes."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


def anomaly_score(mean_path_length, n: int):
    return 2.0 ** (-np.asarray(mean_path_length, dtype=float) / c_factor(n))


@dataclass
class IsolationTree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray       # number of training points reaching a leaf
    depth: np.ndarray

    @property
    def height(self) -> int:
        return int(self.depth.max())

    def path_lengths(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] < self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.feature[node[rows]] >= 0
        return self.leaf_path()[node]

    def leaf_path(self) -> np.ndarray:
        """Depth of every node plus ``c(size)`` for unresolved leaves."""
        cached = getattr(self, "_leaf_path", None)
        if cached is None:
            cached = self.depth + np.array([c_factor(int(s)) for s in self.size])
            self._leaf_path = cached
        return cached

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "size": self.size.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationTree":
        return cls(
            np.asarray(d["feature"], dtype=int),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=int),
            np.asarray(d["right"], dtype=int),
            np.asarray(d["size"], dtype=int),
            np.asarray(d["depth"], dtype=int),
        )


def _grow(points: np.ndarray, max_height: int, rng: np.random.Generator) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(d):
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (size, 0), (depth, d)):
            arr.append(v)
        return len(feature) - 1

    stack = [(new_node(0), np.arange(len(points)))]
    while stack:
        node, idx = stack.pop()
        sub = points[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if depth[node] >= max_height or len(idx) <= 1 or len(candidates) == 0:
            size[node] = len(idx)
            continue
        q = int(rng.choice(candidates))
        split = rng.uniform(lo[q], hi[q])
        while split <= lo[q]:
            split = rng.uniform(lo[q], hi[q])
        mask = sub[:, q] < split
        feature[node], threshold[node] = q, float(split)
        left[node] = new_node(depth[node] + 1)
        right[node] = new_node(depth[node] + 1)
        # push right first so the left subtree is numbered first
        stack.append((right[node], idx[~mask]))
        stack.append((left[node], idx[mask]))

    return IsolationTree(
        np.asarray(feature, dtype=int),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=int),
        np.asarray(right, dtype=int),
        np.asarray(size, dtype=int),
        np.asarray(depth, dtype=int),
    )


class IsolationForest:
    """Ensemble of isolation trees; ``score`` returns values in (0, 1)."""

    def __init__(self, n_trees: int = 100, subsample_size: int = 256, seed: int = 0):
        if n_trees < 1:
            raise InvalidParameterError("n_trees must be positive")
        if subsample_size < 2:
            raise InvalidParameterError("subsample_size must be at least 2")
        self.n_trees = int(n_trees)
        self.subsample_size = int(subsample_size)
        self.seed = int(seed)
        self.trees: list = []
        self.n_features = None
        self.sample_size = None

    @property
    def max_height(self) -> int:
        return int(math.ceil(math.log2(self.sample_size)))

    def fit(self, points) -> "IsolationForest":
        X = np.asarray(points, dtype=float)
        if X.ndim != 2 or len(X) < 2:
            raise FitError("isolation forest needs at least two points")
        if not np.any(X.max(axis=0) > X.min(axis=0)):
            raise FitError("every feature is constant; nothing to isolate")
        self.n_features = X.shape[1]
        self._pack = None
        self.sample_size = min(self.subsample_size, len(X))
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(derive_seed(self.seed, "tree", t))
            idx = rng.choice(len(X), size=self.sample_size, replace=False)
            self.trees.append(_grow(X[idx], self.max_height, rng))
        return self

    def _check(self, X) -> np.ndarray:
        if not self.trees:
            raise FitError("isolation forest is not fitted")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[-1]}")
        return X

    def _packed(self):
        """All trees in one node table; leaves loop onto themselves."""
        if getattr(self, "_pack", None) is None:
            feature, threshold, left, right, leaf, roots = [], [], [], [], [], []
            offset = 0
            for tree in self.trees:
                n = len(tree.feature)
                own = np.arange(n) + offset
                is_leaf = tree.feature < 0
                feature.append(np.where(is_leaf, 0, tree.feature))
                threshold.append(np.where(is_leaf, np.inf, tree.threshold))
                left.append(np.where(is_leaf, own, tree.left + offset))
                right.append(np.where(is_leaf, own, tree.right + offset))
                leaf.append(tree.leaf_path())
                roots.append(offset)
                offset += n
            self._pack = tuple(np.concatenate(a) for a in (feature, threshold, left, right, leaf)) + (
                np.asarray(roots),
                max(tree.height for tree in self.trees),
            )
        return self._pack

    def mean_path_length(self, X) -> np.ndarray:
        X = np.atleast_2d(self._check(X))
        feature, threshold, left, right, leaf, roots, height = self._packed()
        node = np.broadcast_to(roots, (len(X), len(roots))).copy()
        rows = np.arange(len(X))[:, None]
        for _ in range(height):
            go_left = X[rows, feature[node]] < threshold[node]
            node = np.where(go_left, left[node], right[node])
        return leaf[node].mean(axis=1)

    def score_samples(self, X) -> np.ndarray:
        return anomaly_score(self.mean_path_length(X), self.sample_size)

    def score(self, point) -> float:
        point = self._check(point)
        if point.ndim != 1:
            raise ShapeError("score expects a single vector")
        return float(self.score_samples(point[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "type": "isolation_forest",
            "version": FORMAT_VERSION,
            "n_trees": self.n_trees,
            "subsample_size": self.subsample_size,
            "sample_size": self.sample_size,
            "n_features": self.n_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationForest":
        forest = cls(d["n_trees"], d["subsample_size"], d["seed"])
        forest.sample_size = d["sample_size"]
        forest.n_features = d["n_features"]
        forest.trees = [IsolationTree.from_dict(t) for t in d["trees"]]
        forest._pack = None
        return forest
