"""Report figures written next to the JSON/CSV evaluation output."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
ID_COLOR = "#4477aa"
OOD_COLOR = "#cc6677"
PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=PNG_META)
    plt.close(fig)
    return path


def confusion_figure(report, path) -> Path:
    """FP and FN counts for every detector and voter configuration."""
    rows = report.csv_rows()
    names = [("[v] " if r["kind"] == "voter" else "") + r["name"] for r in rows]
    fp = np.array([r["FP"] for r in rows])
    fn = np.array([r["FN"] for r in rows])
    y = np.arange(len(rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.32 * len(rows) + 1.2))
        ax.barh(y - 0.2, fp, height=0.4, color=ID_COLOR, label="FP (ID flagged)")
        ax.barh(y + 0.2, fn, height=0.4, color=OOD_COLOR, label="FN (OOD missed)")
        ax.set_yticks(y)
        ax.set_yticklabels(names)
        ax.invert_yaxis()
        ax.set_xlabel("count")
        ax.set_title(f"Errors on {report.n_id} ID / {report.n_ood} OOD samples")
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def score_histograms(report, path) -> Path:
    """ID vs OOD score distributions with each detector's threshold."""
    ids = list(report.detectors)
    cols = 3
    nrows = max(1, math.ceil(len(ids) / cols))
    is_ood = report.is_ood
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, cols, figsize=(3.0 * cols, 2.2 * nrows), squeeze=False)
        for ax, det in zip(axes.ravel(), ids):
            s = report.scores[det]
            lo, hi = float(np.min(s)), float(np.max(s))
            bins = np.linspace(lo, hi if hi > lo else lo + 1.0, 40)
            ax.hist(s[~is_ood], bins=bins, color=ID_COLOR, alpha=0.7, label="ID")
            ax.hist(s[is_ood], bins=bins, color=OOD_COLOR, alpha=0.7, label="OOD")
            ax.axvline(report.detectors[det]["threshold"], color="k", lw=0.8, ls="--")
            ax.set_title(det)
            ax.set_yscale("log")
        for ax in axes.ravel()[len(ids):]:
            ax.set_visible(False)
        axes[0, 0].legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def decision_scatter(report, voter: str, path) -> Path | None:
    """2-D inputs coloured by ground truth, circled where ``voter`` flags OOD."""
    X = report.inputs
    if X is None or X.shape[1] != 2:
        return None
    flags = report.flags[voter]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.scatter(*X[~report.is_ood].T, s=4, color=ID_COLOR, label="ID")
        ax.scatter(*X[report.is_ood].T, s=4, color=OOD_COLOR, label="OOD")
        ax.scatter(*X[flags].T, s=22, facecolors="none", edgecolors="k", linewidths=0.4,
                   label=f"{voter} flags")
        ax.set_aspect("equal")
        ax.legend(frameon=False, loc="upper right")
        ax.set_title(f"{voter} decisions")
        return _save(fig, path)


def write_figures(report, outdir) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [confusion_figure(report, outdir / "confusion.png"),
             score_histograms(report, outdir / "scores.png")]
    for name in report.voters:
        p = decision_scatter(report, name, outdir / f"decisions_{name}.png")
        if p is not None:
            paths.append(p)
    return paths
