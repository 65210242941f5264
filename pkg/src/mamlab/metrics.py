"""Evaluation metrics: top-1 accuracy and macro mean average precision."""

from __future__ import annotations

import numpy as np

from .errors import InputError


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the integer label."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.ndim != 2 or len(labels) != scores.shape[0]:
        raise InputError(
            f"scores {scores.shape} and labels {labels.shape} do not align")
    if scores.shape[0] == 0:
        raise InputError("cannot score an empty evaluation set")
    return float((scores.argmax(axis=1) == labels).mean())


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """AP via precision at each positive in the score-descending ranking.

    Ties break by original index (stable sort on negated scores).
    """
    order = np.argsort(-scores, kind="stable")
    hits = positives[order].astype(bool)
    n_pos = int(hits.sum())
    if n_pos == 0:
        raise InputError("average precision undefined with no positives")
    ranks = np.arange(1, len(scores) + 1)
    cumulative = np.cumsum(hits)
    return float((cumulative[hits] / ranks[hits]).sum() / n_pos)


def mean_average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Macro-average of per-class AP; classes without positives are skipped."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise InputError(
            f"scores {scores.shape} and binary labels {labels.shape} must match as S x C")
    per_class = []
    for c in range(scores.shape[1]):
        if labels[:, c].sum() == 0:
            continue
        per_class.append(average_precision(scores[:, c], labels[:, c]))
    if not per_class:
        raise InputError("no class has a positive example; mAP undefined")
    return float(np.mean(per_class))
