"""Synthetic labelled datasets with replayable provenance.

Every generator records its name, seed and parameters; :func:`regenerate`
rebuilds the exact same samples from that record. OOD samples carry label -1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, InvalidInputError, InvalidParameterError
from ..model import MlpModel, input_gradient
from ..seeding import derive_seed, rng

OOD_LABEL = -1
MEAN_SEPARATION = 7.0     # in spreads; leaves margin over the 6-spread guarantee for sample means


@dataclass
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    membership: np.ndarray          # "ID" / "OOD" per row
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim == 1:
            self.samples = self.samples.reshape(0, 0) if len(self.samples) == 0 else self.samples[None, :]
        self.labels = np.asarray(self.labels, dtype=int)
        self.membership = np.asarray(self.membership, dtype=object)
        if not len(self.samples) == len(self.labels) == len(self.membership):
            raise InvalidInputError("samples, labels and membership differ in length")
        bad = set(self.membership.tolist()) - {"ID", "OOD"}
        if bad:
            raise InvalidInputError(f"membership tags must be ID/OOD, got {sorted(bad)}")

    def __len__(self):
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def is_ood(self) -> np.ndarray:
        return self.membership == "OOD"

    def subset(self, idx, **provenance) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        prov = {"generator": "subset", "parent": self.provenance, "index": idx.tolist()}
        prov.update(provenance)
        return LabeledDataset(self.samples[idx], self.labels[idx], self.membership[idx], prov)

    def id_only(self) -> "LabeledDataset":
        return self.subset(np.flatnonzero(~self.is_ood))

    @staticmethod
    def concat(parts, provenance=None) -> "LabeledDataset":
        parts = list(parts)
        return LabeledDataset(
            np.concatenate([p.samples for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.membership for p in parts]),
            provenance or {"generator": "concat", "parts": [p.provenance for p in parts]},
        )

    # -- JSON Lines -------------------------------------------------------

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for i, (x, y, m) in enumerate(zip(self.samples, self.labels, self.membership)):
                fh.write(json.dumps({"id": i, "x": x.tolist(), "label": int(y), "membership": m}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "LabeledDataset":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"dataset file not found: {path}")
        xs, ys, ms = [], [], []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    xs.append([float(v) for v in rec["x"]])
                    ys.append(int(rec.get("label", OOD_LABEL)))
                    ms.append(rec.get("membership", "ID"))
                except (ValueError, KeyError, TypeError) as exc:
                    raise InvalidInputError(f"{path}:{lineno}: bad record ({exc})") from None
        samples = np.asarray(xs, dtype=float) if xs else np.zeros((0, 0))
        return cls(samples, ys, ms, {"generator": "file", "path": str(path)})


def _class_means(classes: int, dim: int, spread: float, seed: int) -> np.ndarray:
    g = rng(seed, "means")
    sep = MEAN_SEPARATION * spread
    half = sep * (1.0 + 0.75 * classes ** (1.0 / dim))
    means = []
    for _ in range(100_000):
        cand = g.uniform(-half, half, size=dim)
        if all(np.linalg.norm(cand - m) >= sep for m in means):
            means.append(cand)
            if len(means) == classes:
                return np.asarray(means)
    raise InvalidParameterError("could not place well-separated class means")


def _blob(mean, count, spread, g) -> np.ndarray:
    return mean + spread * g.standard_normal((count, len(mean)))


def gen_id(classes: int, per_class: int, dim: int = 2, spread: float = 1.0, seed: int = 0) -> LabeledDataset:
    """Isotropic Gaussian blobs, class-major order, all tagged ID.

    Class means sit at least seven spreads apart.
    """
    if classes < 1 or per_class < 1 or dim < 1 or not spread > 0:
        raise InvalidParameterError("classes, per_class, dim and spread must be positive")
    means = _class_means(classes, dim, spread, seed)
    xs = [_blob(means[c], per_class, spread, rng(seed, "samples", c)) for c in range(classes)]
    labels = np.repeat(np.arange(classes), per_class)
    prov = {"generator": "gen_id", "seed": int(seed),
            "params": {"classes": classes, "per_class": per_class, "dim": dim, "spread": spread}}
    return LabeledDataset(np.concatenate(xs), labels, np.full(len(labels), "ID", dtype=object), prov)


def class_statistics(dataset: LabeledDataset):
    """Per-class sample means and the pooled per-coordinate spread of ID rows."""
    ds = dataset.id_only()
    if len(ds) == 0:
        raise InvalidInputError("reference has no ID samples")
    classes = np.unique(ds.labels)
    means = np.stack([ds.samples[ds.labels == c].mean(axis=0) for c in classes])
    resid = ds.samples - means[np.searchsorted(classes, ds.labels)]
    return means, float(np.sqrt(np.mean(resid ** 2)))


OOD_KINDS = ("far_uniform", "near_boundary", "ring")


def _unit_vectors(g, count, dim) -> np.ndarray:
    if dim == 2:
        theta = g.uniform(0.0, 2.0 * math.pi, size=count)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    v = g.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def gen_ood(reference: LabeledDataset, kind: str, count: int, seed: int = 0) -> LabeledDataset:
    """OOD samples relative to ``reference``.

    far_uniform: uniform over the reference bounding box inflated x5, with
    draws inside the original box rejected. near_boundary: 2-3 spreads from
    the nearest class mean. ring: on a sphere of radius 4R around the data
    centroid, R being the largest centroid distance in the reference.
    """
    if kind not in OOD_KINDS:
        raise ConfigurationError(f"unknown OOD kind {kind!r}")
    if len(reference) == 0:
        raise InvalidInputError("reference dataset is empty")
    if count < 0:
        raise InvalidParameterError("count must be nonnegative")
    X = reference.samples
    dim = X.shape[1]
    g = rng(seed, "ood", kind)
    if count == 0:
        out = np.zeros((0, dim))
    elif kind == "far_uniform":
        lo, hi = X.min(axis=0), X.max(axis=0)
        center, half = (lo + hi) / 2.0, np.maximum((hi - lo) / 2.0, 1e-12)
        chunks, have = [], 0
        while have < count:
            cand = g.uniform(center - 5 * half, center + 5 * half, size=(2 * count, dim))
            cand = cand[np.any((cand < lo) | (cand > hi), axis=1)]
            chunks.append(cand)
            have += len(cand)
        out = np.concatenate(chunks)[:count]
    elif kind == "near_boundary":
        means, spread = class_statistics(reference)
        chunks, have = [], 0
        while have < count:
            c = g.integers(len(means), size=2 * count)
            r = g.uniform(2.0, 3.0, size=2 * count) * spread
            cand = means[c] + r[:, None] * _unit_vectors(g, 2 * count, dim)
            d = np.linalg.norm(cand[:, None, :] - means[None, :, :], axis=2)
            cand = cand[np.argmin(d, axis=1) == c]
            chunks.append(cand)
            have += len(cand)
        out = np.concatenate(chunks)[:count]
    else:
        centroid = X.mean(axis=0)
        radius = 4.0 * np.linalg.norm(X - centroid, axis=1).max()
        out = centroid + radius * _unit_vectors(g, count, dim)
    prov = {"generator": "gen_ood", "seed": int(seed), "reference": reference.provenance,
            "params": {"kind": kind, "count": count}}
    return LabeledDataset(out, np.full(count, OOD_LABEL), np.full(count, "OOD", dtype=object), prov)


SHIFT_KINDS = ("covariate", "label", "concept")


def _largest_remainder(total: int, proportions) -> np.ndarray:
    p = np.asarray(proportions, dtype=float)
    if np.any(p < 0) or p.sum() <= 0:
        raise InvalidParameterError("proportions must be nonnegative with positive sum")
    raw = total * p / p.sum()
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts


def gen_shift(reference: LabeledDataset, kind: str, magnitude: float = 1.0, seed: int = 0,
              proportions=None) -> LabeledDataset:
    """Fresh draw from the reference blob generator under a distribution shift.

    covariate: inputs translated by ``magnitude * spread`` along every axis,
    labels untouched. label: class proportions replaced by ``proportions``
    while each class keeps its own blob. concept: the class-to-blob assignment
    is permuted, so P(X) is unchanged while P(Y|X) is not.
    """
    if kind not in SHIFT_KINDS:
        raise ConfigurationError(f"unknown shift kind {kind!r}")
    if len(reference) == 0:
        raise InvalidInputError("reference dataset is empty")
    prov = reference.provenance
    if prov.get("generator") != "gen_id":
        raise ConfigurationError("shift generation needs a reference produced by gen_id")
    p = prov["params"]
    classes, per_class, dim, spread = p["classes"], p["per_class"], p["dim"], p["spread"]
    means = _class_means(classes, dim, spread, prov["seed"])
    counts = np.full(classes, per_class)
    assignment = np.arange(classes)
    offset = np.zeros(dim)
    if kind == "covariate":
        if magnitude < 0:
            raise InvalidParameterError("covariate shift magnitude must be nonnegative")
        offset = np.full(dim, magnitude * spread)
    elif kind == "label":
        if proportions is None or len(proportions) != classes:
            raise InvalidParameterError(f"label shift needs {classes} proportions")
        counts = _largest_remainder(classes * per_class, proportions)
    elif classes > 1:
        g = rng(seed, "concept")
        while np.any(assignment == np.arange(classes)):
            assignment = g.permutation(classes)
    xs = [_blob(means[assignment[c]], counts[c], spread, rng(seed, "shift", kind, c)) + offset
          for c in range(classes)]
    labels = np.repeat(np.arange(classes), counts)
    record = {"generator": "gen_shift", "seed": int(seed), "reference": prov,
              "params": {"kind": kind, "magnitude": magnitude,
                         "proportions": None if proportions is None else [float(v) for v in proportions]}}
    out = LabeledDataset(np.concatenate(xs), labels, np.full(len(labels), "ID", dtype=object), record)
    out.assignment = assignment
    return out


def universal_perturbation(model: MlpModel, samples, labels, epsilon: float) -> np.ndarray:
    """``epsilon * sign(mean input-gradient of the loss)``; zero components map to +epsilon."""
    g = input_gradient(model, samples, labels).mean(axis=0)
    return epsilon * np.where(g < 0, -1.0, 1.0)


def gen_uap(model: MlpModel, dataset: LabeledDataset, epsilon: float, seed: int = 0):
    """Add one shared perturbation to every sample; returns ``(dataset, vector)``.

    The construction is deterministic; ``seed`` is only recorded.
    """
    if not model.trained:
        raise ConfigurationError("universal perturbation needs a trained model")
    if epsilon < 0:
        raise InvalidParameterError("epsilon must be nonnegative")
    if epsilon == 0:
        vec = np.zeros(dataset.dim)
    else:
        ids = dataset.id_only()
        vec = universal_perturbation(model, ids.samples, ids.labels, epsilon)
    prov = {"generator": "gen_uap", "seed": int(seed), "reference": dataset.provenance,
            "params": {"epsilon": epsilon, "vector": vec.tolist()}}
    return LabeledDataset(dataset.samples + vec, dataset.labels, dataset.membership, prov), vec


def proxy_ood(reference: LabeledDataset, count: int, seed: int = 0, inflate: float = 5.0,
              margin: float = 1.5) -> np.ndarray:
    """Uniform noise over the ID bounding box inflated ``inflate`` times.

    Draws closer than ``margin`` pooled spreads to any ID sample are dropped so
    the reject class is not taught to cover the ID support.
    """
    X = reference.id_only().samples
    _, spread = class_statistics(reference)
    lo, hi = X.min(axis=0), X.max(axis=0)
    center, half = (lo + hi) / 2.0, np.maximum((hi - lo) / 2.0, 1e-12)
    g = rng(seed, "proxy_ood")
    chunks, have = [], 0
    while have < count:
        cand = g.uniform(center - inflate * half, center + inflate * half, size=(2 * count, X.shape[1]))
        d = np.sqrt(((cand[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
        cand = cand[d >= margin * spread]
        chunks.append(cand)
        have += len(cand)
    return np.concatenate(chunks)[:count]


# ---------------------------------------------------------------------------
# frozen desk-scale fixture
# ---------------------------------------------------------------------------

FIXTURE_PARTS = ("train", "calibrate", "evaluate")


def fixture_base(seed: int = 7) -> LabeledDataset:
    return gen_id(classes=3, per_class=500, dim=2, spread=1.0, seed=seed)


def fixture(part: str, seed: int = 7) -> LabeledDataset:
    """3 x 500 blobs split 900/300/300; ``evaluate`` adds 500 ring OOD points."""
    if part not in FIXTURE_PARTS:
        raise ConfigurationError(f"unknown fixture part {part!r}")
    base = fixture_base(seed)
    order = rng(seed, "split").permutation(len(base))
    bounds = {"train": (0, 900), "calibrate": (900, 1200), "evaluate": (1200, 1500)}
    lo, hi = bounds[part]
    ds = base.subset(np.sort(order[lo:hi]))
    if part == "evaluate":
        ring = gen_ood(base, "ring", 500, derive_seed(seed, "ring"))
        ds = LabeledDataset.concat([ds, ring])
    ds.provenance = {"generator": "fixture", "seed": int(seed), "params": {"part": part}}
    return ds


def regenerate(provenance: dict) -> LabeledDataset:
    """Rebuild a dataset from its provenance record."""
    gen = provenance.get("generator")
    if gen == "gen_id":
        return gen_id(seed=provenance["seed"], **provenance["params"])
    if gen == "fixture":
        return fixture(provenance["params"]["part"], provenance["seed"])
    if gen == "gen_ood":
        p = provenance["params"]
        return gen_ood(regenerate(provenance["reference"]), p["kind"], p["count"], provenance["seed"])
    if gen == "gen_shift":
        p = provenance["params"]
        return gen_shift(regenerate(provenance["reference"]), p["kind"], p["magnitude"],
                         provenance["seed"], p["proportions"])
    if gen == "file":
        return LabeledDataset.from_jsonl(provenance["path"])
    if gen == "subset":
        return regenerate(provenance["parent"]).subset(provenance["index"])
    if gen == "concat":
        return LabeledDataset.concat([regenerate(p) for p in provenance["parts"]])
    raise ConfigurationError(f"cannot regenerate from generator {gen!r}")
