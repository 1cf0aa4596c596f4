"""Imbalance-aware evaluation from the confusion matrix.

Zero-division conventions (per-class F1 = 0, recall contribution 0, MCC = 0
on a degenerate denominator) deliberately penalize degenerate predictors.
"""

import numpy as np

from .errors import DimensionError


def confusion(true_labels, predicted_labels, n_classes):
    """counts[i][j] = #(true == i and predicted == j)."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise DimensionError("label sequences differ in length")
    if len(t) and (t.min() < 0 or t.max() >= n_classes
                   or p.min() < 0 or p.max() >= n_classes):
        raise DimensionError(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def macro_f1(cm):
    """Unweighted mean of per-class F1."""
    cm = np.asarray(cm)
    c = cm.shape[0]
    f1 = np.zeros(c)
    for i in range(c):
        tp = cm[i, i]
        fp = cm[:, i].sum() - tp
        fn = cm[i, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1[i] = 2.0 * tp / denom if denom > 0 else 0.0
    return float(f1.mean())


def balanced_accuracy(cm):
    """Unweighted mean of per-class recall."""
    cm = np.asarray(cm)
    row = cm.sum(axis=1)
    recall = np.where(row > 0, np.diag(cm) / np.maximum(row, 1), 0.0)
    return float(recall.mean())


def mcc(cm):
    """Multiclass Matthews correlation from row/column sums; 0 when a
    denominator factor vanishes."""
    cm = np.asarray(cm, dtype=np.float64)
    n = cm.sum()
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    num = n * np.trace(cm) - t @ p
    d1 = n * n - p @ p
    d2 = n * n - t @ t
    if d1 <= 0 or d2 <= 0:
        return 0.0
    return float(num / np.sqrt(d1 * d2))


def evaluate(true_labels, predicted_labels, n_classes):
    """All three scores at once: (macro_f1, balanced_accuracy, mcc)."""
    cm = confusion(true_labels, predicted_labels, n_classes)
    return macro_f1(cm), balanced_accuracy(cm), mcc(cm)
