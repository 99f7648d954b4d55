"""Threshold-free and threshold-dependent detection metrics.

Label ``1`` is the attack (positive) class. Scores rank flows: higher means
more anomalous, and a flow is flagged when ``score > threshold``.
"""

from __future__ import annotations

import numpy as np

from graphids import kernels


class DegenerateScoresError(ValueError):
    """All validation scores are equal, so no threshold separates anything."""


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = (np.asarray(labels).ravel() != 0).astype(np.int64)
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores but {len(labels)} labels")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise ValueError("metric needs both positive and negative labels")
    return scores, labels, n_pos


def _descending(scores, labels):
    order = np.argsort(-scores, kind="stable")
    return kernels.descending_counts(np.ascontiguousarray(scores[order]),
                                     np.ascontiguousarray(labels[order]))


def pr_curve(scores, labels):
    """Operating points at every distinct score, highest threshold first.

    Returns ``(recall, precision, thresholds)``. The first point is the anchor
    at recall 0, carrying the precision of the highest threshold; its threshold
    entry is ``+inf``.
    """
    scores, labels, n_pos = _check(scores, labels)
    thr, tp, fp = _descending(scores, labels)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return (np.concatenate([[0.0], recall]), np.concatenate([[precision[0]], precision]),
            np.concatenate([[np.inf], thr]))


def pr_auc(scores, labels) -> float:
    """Area under the PR curve with linear interpolation between operating points."""
    recall, precision, _ = pr_curve(scores, labels)
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(x, dtype=np.float64) for x in (tp, fp, fn))
    den = 2 * tp + fp + fn
    return np.divide(2 * tp, den, out=np.zeros_like(den), where=den > 0)


def confusion(predictions, labels) -> dict[str, int]:
    p = np.asarray(predictions).ravel() != 0
    y = np.asarray(labels).ravel() != 0
    return {"tp": int(np.sum(p & y)), "fp": int(np.sum(p & ~y)),
            "tn": int(np.sum(~p & ~y)), "fn": int(np.sum(~p & y))}


def macro_f1(predictions, labels) -> float:
    """Unweighted mean of the two per-class F1 scores (empty class -> F1 0)."""
    c = confusion(predictions, labels)
    f_pos = _f1(c["tp"], c["fp"], c["fn"])
    f_neg = _f1(c["tn"], c["fn"], c["fp"])
    return float((f_pos + f_neg) / 2.0)


def threshold_candidates(scores, labels):
    """All distinct decision points with their confusion counts.

    Returns ``(thresholds, tp, fp)`` ordered from ``+inf`` (nothing flagged)
    down to ``-inf`` (everything flagged); interior thresholds are midpoints
    between consecutive distinct scores.
    """
    scores, labels, _ = _check(scores, labels)
    thr, tp, fp = _descending(scores, labels)
    lower = thr[1:]
    mid = lower + (thr[:-1] - lower) / 2.0
    mid = np.where(mid >= thr[:-1], lower, mid)   # adjacent floats: fall back to the lower score
    mid = np.concatenate([mid, [-np.inf]])
    return (np.concatenate([[np.inf], mid]), np.concatenate([[0], tp]),
            np.concatenate([[0], fp]))


def macro_f1_curve(scores, labels):
    """Macro F1 at every candidate threshold (same order as ``threshold_candidates``)."""
    labels_b = np.asarray(labels).ravel() != 0
    n_pos = int(labels_b.sum())
    n_neg = len(labels_b) - n_pos
    thr, tp, fp = threshold_candidates(scores, labels)
    fn = n_pos - tp
    tn = n_neg - fp
    return thr, (_f1(tp, fp, fn) + _f1(tn, fn, fp)) / 2.0


def select_threshold(val_scores, val_labels) -> float:
    """Threshold maximising validation macro F1; ties go to the larger threshold."""
    scores = np.asarray(val_scores, dtype=np.float64)
    thr, f1 = macro_f1_curve(scores, val_labels)
    if len(thr) <= 2:
        raise DegenerateScoresError("all validation scores are equal; no separating threshold")
    return float(thr[int(np.argmax(f1))])
