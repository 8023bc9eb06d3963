"""Ranking metrics for multi-label evaluation.

AP here is the information-retrieval form: sort by score descending and
average precision@rank over the positive ranks. Ties rank the lower
sample index first. mAP is the macro mean over classes that have at
least one positive; classes without positives are reported, not folded
in as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NoPositivesError(ValueError):
    """The label list holds no positive sample."""


@dataclass
class EvalResult:
    per_class_ap: list[float]  # NaN for classes with no positives
    mAP: float
    excluded_classes: list[int]


def average_precision(scores, labels) -> float:
    s = np.asarray(scores, np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D")
    if not y.any():
        raise NoPositivesError("no positive labels")
    order = np.argsort(-s, kind="stable")  # ties: lower index first
    hits = y[order].astype(np.float64)
    ranks = np.arange(1, len(s) + 1, dtype=np.float64)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits == 1].mean())


def mean_average_precision(logit_matrix, label_matrix) -> EvalResult:
    """Per-class AP on raw logits (sigmoid is rank-preserving) and their
    macro mean over classes with positives."""
    z = np.asarray(logit_matrix, np.float64)
    y = np.asarray(label_matrix)
    if z.shape != y.shape or z.ndim != 2:
        raise ValueError(
            f"logits {z.shape} and labels {y.shape} must be matching 2-D"
        )
    aps: list[float] = []
    excluded: list[int] = []
    for cls in range(z.shape[1]):
        if y[:, cls].any():
            aps.append(average_precision(z[:, cls], y[:, cls]))
        else:
            aps.append(math.nan)
            excluded.append(cls)
    valid = [a for a in aps if not math.isnan(a)]
    if not valid:
        raise NoPositivesError("no class has a positive sample")
    return EvalResult(
        per_class_ap=aps, mAP=float(np.mean(valid)), excluded_classes=excluded
    )
