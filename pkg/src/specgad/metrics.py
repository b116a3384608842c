"""Detection metrics: confusion counts, accuracy/precision/recall/F1,
ROC with AUC, average precision, and Youden-index threshold selection.

Conventions: the positive class is "anomalous" (label 1), a sample is
predicted positive when score >= tau, and undefined ratios (zero
denominators) evaluate to 0.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int  # 0 = normal, 1 = anomalous


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D with equal length")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def from_samples(samples):
    """Split a sequence of ScoredSample into (scores, labels) arrays."""
    return (np.array([s.score for s in samples]),
            np.array([s.label for s in samples]))


def confusion(scores, labels, tau) -> ConfusionCounts:
    s, y = _as_arrays(scores, labels)
    pred = s >= tau
    return ConfusionCounts(
        tp=int(np.sum(pred & (y == 1))),
        fp=int(np.sum(pred & (y == 0))),
        tn=int(np.sum(~pred & (y == 0))),
        fn=int(np.sum(~pred & (y == 1))),
    )


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def prf1(counts: ConfusionCounts):
    """Returns (accuracy, precision, recall, f1)."""
    accuracy = _ratio(counts.tp + counts.tn, counts.total)
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    return accuracy, precision, recall, f1


def _sweep(scores, labels):
    """Cumulative tp/fp after including each distinct score, descending.

    Returns (distinct thresholds desc, tp counts, fp counts, n_pos, n_neg).
    """
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # indices of the last occurrence of each distinct score
    last = np.nonzero(np.append(np.diff(s) != 0, True))[0]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return s[last], tp, fp, n_pos, n_neg


def roc_auc(scores, labels) -> RocCurve:
    """ROC by sweeping all distinct scores as thresholds (prediction:
    score >= threshold); AUC by trapezoidal integration. Tied scores
    collapse to one curve point, which matches the Mann-Whitney
    statistic with half credit for ties."""
    thr, tp, fp, n_pos, n_neg = _sweep(scores, labels)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc requires both classes")
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    thresholds = np.concatenate([[np.inf], thr])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def average_precision(scores, labels) -> float:
    """Step-wise AP = sum_n (R_n - R_{n-1}) * P_n over descending
    distinct-score thresholds."""
    thr, tp, fp, n_pos, _ = _sweep(scores, labels)
    if n_pos == 0:
        raise ValueError("average_precision requires positive samples")
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def youden_threshold(scores, labels) -> float:
    """Distinct score maximizing TPR - FPR; ties resolved to the smallest
    such threshold."""
    thr, tp, fp, n_pos, n_neg = _sweep(scores, labels)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("youden_threshold requires both classes")
    j = tp / n_pos - fp / n_neg
    best = np.max(j)
    # thr is descending, so the last maximizer is the smallest threshold
    idx = np.nonzero(j == best)[0][-1]
    return float(thr[idx])
