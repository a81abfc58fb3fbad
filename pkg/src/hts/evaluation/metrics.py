"""Confusion matrices and the scores derived from them."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Metric undefined for the given counts or labels."""


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def binary_counts(self, positive: int = 1) -> dict[str, int]:
        """TP/TN/FP/FN treating ``positive`` as the positive class."""
        c = self.counts
        tp = int(c[positive, positive])
        fn = int(c[positive].sum() - tp)
        fp = int(c[:, positive].sum() - tp)
        return {"TP": tp, "FN": fn, "FP": fp, "TN": self.total - tp - fn - fp}

    def write_csv(self, path, class_names=None) -> None:
        names = list(class_names) if class_names is not None else [str(i) for i in range(self.k)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *names])
            for name, row in zip(names, self.counts):
                w.writerow([name, *map(int, row)])


def confusion(true, pred, k: int) -> ConfusionMatrix:
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if true.shape != pred.shape:
        raise MetricError(f"label lists differ in length: {true.size} vs {pred.size}")
    for name, arr in (("true", true), ("predicted", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise MetricError(f"{name} labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    """trace / total, the multi-class form of (TN+TP)/(TN+FP+TP+FN)."""
    if cm.total == 0:
        raise MetricError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def binary_accuracy(tp: int, tn: int, fp: int, fn: int) -> float:
    denom = tn + fp + tp + fn
    if denom == 0:
        raise MetricError("no samples")
    return (tn + tp) / denom


def precision_recall(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    diag = np.diag(cm.counts).astype(np.float64)
    col = cm.counts.sum(axis=0).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(col > 0, diag / np.where(col > 0, col, 1), 0.0)
        r = np.where(row > 0, diag / np.where(row > 0, row, 1), 0.0)
    return p, r


def f1_scores(cm: ConfusionMatrix) -> list[float]:
    """Per-class 2PR/(P+R); 0 wherever that is 0/0."""
    if cm.k < 2:
        raise MetricError("F1 needs at least two classes")
    p, r = precision_recall(cm)
    denom = p + r
    f1 = np.where(denom > 0, 2 * p * r / np.where(denom > 0, denom, 1), 0.0)
    return [float(v) for v in f1]


def adjacent_accuracy(cm: ConfusionMatrix) -> float:
    """Share of samples predicted within one class of the truth (ordered classes)."""
    if cm.total == 0:
        raise MetricError("adjacent accuracy of an empty confusion matrix is undefined")
    i, j = np.indices(cm.counts.shape)
    return float(cm.counts[np.abs(i - j) <= 1].sum() / cm.total)


def aggregate(values) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise MetricError("cannot aggregate an empty list")
    return float(v.mean()), float(v.std())
