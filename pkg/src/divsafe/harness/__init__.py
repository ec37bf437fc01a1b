"""Synthetic data, evaluation and analysis harness."""

from .analysis import ActionFunction, CascadeAnalysis, OverconfidenceReport, error_cascade, overconfidence
from .data import (
    LabeledDataset,
    fixture,
    gen_id,
    gen_ood,
    gen_shift,
    gen_uap,
    proxy_ood,
    regenerate,
)
from .evaluate import Confusion, EvalReport, auroc, evaluate
