"""Ranking metrics with pinned tie handling, plus curve-point export.

auroc is the rank statistic (probability a random positive outranks a
random negative, ties counting one half), identical to trapezoidal ROC
area.  auprc is average precision: the mean of precision values at the
ranks of the positives when scores are sorted descending, ties broken by
ascending original index so results never depend on sort stability.
"""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """The metric is undefined for this label composition."""


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError(
            f"scores and labels must be equal-length vectors, got "
            f"{scores.shape} and {labels.shape}"
        )
    if scores.size == 0:
        raise MetricError("empty score set")
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    bad = (labels != 0.0) & (labels != 1.0)
    if bad.any():
        raise ValueError(f"labels must be 0 or 1, found {labels[bad][0]}")
    return scores, labels


def _tie_average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ascending by score, equal scores get their mean rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties as one half."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(
            f"auroc needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    ranks = _tie_average_ranks(scores)
    pos_rank_sum = ranks[labels == 1.0].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _descending_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending; equal scores by ascending index."""
    return np.lexsort((np.arange(scores.size), -scores))


def auprc(scores, labels) -> float:
    """Average precision over the ranks of the positives."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("auprc needs at least one positive")
    order = _descending_order(scores)
    hits = labels[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, scores.size + 1)
    precision_at_pos = (cum_hits / ranks)[hits == 1.0]
    return float(precision_at_pos.sum() / n_pos)


def roc_points(scores, labels) -> np.ndarray:
    """(FPR, TPR) pairs at every distinct threshold, from (0,0) to (1,1)."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(
            f"ROC curve needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    order = _descending_order(scores)
    sorted_scores = scores[order]
    hits = labels[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    # keep the last rank of every run of equal scores
    keep = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    points = np.column_stack([fp[keep] / n_neg, tp[keep] / n_pos])
    return np.vstack([[0.0, 0.0], points])


def pr_points(scores, labels) -> np.ndarray:
    """(recall, precision) pairs at every rank in the pinned order."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("PR curve needs at least one positive")
    order = _descending_order(scores)
    hits = labels[order]
    tp = np.cumsum(hits)
    ranks = np.arange(1, scores.size + 1)
    return np.column_stack([tp / n_pos, tp / ranks])


def save_curve(path: str, points: np.ndarray) -> None:
    """Two-column numeric text, one point per line."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"curve points must be (n,2), got {points.shape}")
    np.savetxt(path, points, fmt="%.17g")
