"""Histogram KL divergence and a windowed covariate-shift detector."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import CalibrationError, InvalidInputError, ShapeError
from .verdict import Decision, DetectorVerdict

SMOOTHING = 1e-9
DEFAULT_BINS = 16
RANGE_INFLATION = 0.10
MIN_WINDOW = 30
FORMAT_VERSION = 1


@dataclass
class Histogram:
    edges: np.ndarray
    masses: np.ndarray
    epsilon: float = SMOOTHING

    @classmethod
    def from_values(cls, values, edges, epsilon: float = SMOOTHING) -> "Histogram":
        """Bin ``values`` (out-of-range values fall in the edge bins) and smooth."""
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float).ravel()
        idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, len(edges) - 2)
        counts = np.bincount(idx, minlength=len(edges) - 1).astype(float)
        return cls.from_counts(counts, edges, epsilon)

    @classmethod
    def from_counts(cls, counts, edges=None, epsilon: float = SMOOTHING) -> "Histogram":
        p = np.asarray(counts, dtype=float)
        if p.ndim != 1 or len(p) == 0 or np.any(p < 0) or p.sum() <= 0:
            raise InvalidInputError("histogram counts must be nonnegative with positive total")
        if edges is None:
            edges = np.arange(len(p) + 1, dtype=float)
        p = p / p.sum() + epsilon
        return cls(np.asarray(edges, dtype=float), p / p.sum(), epsilon)


def kl_divergence(P: Histogram, Q: Histogram) -> float:
    """``sum P ln(P/Q)`` in nats over shared bins."""
    if P.edges.shape != Q.edges.shape or not np.array_equal(P.edges, Q.edges):
        raise ShapeError("histograms use different binning")
    return float(max(np.sum(P.masses * np.log(P.masses / Q.masses)), 0.0))


def reference_edges(column, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-width edges over the reference range widened by 10%."""
    lo, hi = float(np.min(column)), float(np.max(column))
    pad = (hi - lo) * RANGE_INFLATION / 2.0
    if hi - lo <= 0:
        pad = max(abs(lo), 1.0) * 0.5
    return np.linspace(lo - pad, hi + pad, bins + 1)


class ShiftDetector:
    """Per-feature histogram KL between a reference window and a live window.

    Flags a shift when the largest per-feature divergence exceeds ``tau``.
    Report-only: its verdicts are never fed to the voter. The sliding window
    behind ``update``/``check_window`` is the only mutable runtime state and
    expects a single writer.
    """

    detector_id = "shift"

    def __init__(self, bins: int = DEFAULT_BINS, window: int = 200, tau: float | None = None):
        if window < MIN_WINDOW:
            raise InvalidInputError(f"window must hold at least {MIN_WINDOW} samples")
        self.bins = int(bins)
        self.window = int(window)
        self.tau = tau
        self.edges = None
        self.reference = None
        self.scale = None
        self._live = deque(maxlen=self.window)

    def fit(self, reference) -> "ShiftDetector":
        R = np.atleast_2d(np.asarray(reference, dtype=float))
        if len(R) < MIN_WINDOW:
            raise InvalidInputError(f"reference window must hold at least {MIN_WINDOW} samples")
        self.scale = R.std(axis=0)
        self.edges = [reference_edges(R[:, j], self.bins) for j in range(R.shape[1])]
        self.reference = [Histogram.from_values(R[:, j], e) for j, e in enumerate(self.edges)]
        return self

    def per_feature(self, live) -> np.ndarray:
        L = np.atleast_2d(np.asarray(live, dtype=float))
        if len(L) < MIN_WINDOW:
            raise InvalidInputError(f"live window must hold at least {MIN_WINDOW} samples")
        if L.shape[1] != len(self.edges):
            raise ShapeError("live window feature count differs from reference")
        return np.array([
            kl_divergence(P, Histogram.from_values(L[:, j], self.edges[j]))
            for j, P in enumerate(self.reference)
        ])

    def statistic(self, live) -> float:
        return float(self.per_feature(live).max())

    def calibrate(self, windows, quantile: float = 0.99) -> float:
        """Set ``tau`` to a quantile of the statistic over same-distribution windows."""
        stats = [self.statistic(w) for w in windows]
        if len(stats) < 2:
            raise CalibrationError("need several same-distribution windows")
        self.tau = float(np.quantile(stats, quantile, method="inverted_cdf"))
        return self.tau

    def check(self, live) -> DetectorVerdict:
        """OOD decision here means 'shift detected'."""
        if self.tau is None:
            raise CalibrationError("shift detector has no threshold")
        return DetectorVerdict.from_score(self.detector_id, self.statistic(live), self.tau, False)

    def update(self, x) -> None:
        self._live.append(np.asarray(x, dtype=float))

    def check_window(self) -> DetectorVerdict | None:
        if len(self._live) < MIN_WINDOW:
            return None
        return self.check(np.stack(self._live))

    def to_dict(self) -> dict:
        return {
            "type": "shift",
            "version": FORMAT_VERSION,
            "bins": self.bins,
            "window": self.window,
            "tau": self.tau,
            "scale": self.scale.tolist(),
            "edges": [e.tolist() for e in self.edges],
            "reference": [h.masses.tolist() for h in self.reference],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftDetector":
        det = cls(d["bins"], d["window"], d["tau"])
        det.scale = np.asarray(d["scale"], dtype=float)
        det.edges = [np.asarray(e, dtype=float) for e in d["edges"]]
        det.reference = [Histogram(e, np.asarray(m, dtype=float)) for e, m in zip(det.edges, d["reference"])]
        return det
