"""Clip-level classification metrics with support-weighted averaging.

Weighted averaging makes accuracy and weighted recall identical, which is
the convention of the reported results (their accuracy and recall columns
agree row by row).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

METRICS = ("accuracy", "precision", "recall", "f1")


def confusion_matrix(preds, labels, n_classes: int) -> np.ndarray:
    """Entry (i, j) counts samples of true class i predicted as j."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"{preds.size} predictions vs {labels.size} labels")
    for name, v in (("prediction", preds), ("label", labels)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise IndexError(f"{name} out of range [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def per_class_prf(cm: np.ndarray):
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1, support


def weighted_prf(cm) -> tuple[float, float, float]:
    """Support-weighted precision, recall and F1 in percent."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix holds no samples")
    precision, _, f1, support = per_class_prf(cm)
    w = support / total
    # sum_c (n_c / N) * (TP_c / n_c) == sum(TP) / N, computed exactly
    recall = 100.0 * int(np.trace(cm)) / total
    return 100.0 * float(w @ precision), recall, 100.0 * float(w @ f1)


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    confusion: list[list[int]]
    n_samples: int
    label_set: list[str] = field(default_factory=list)

    @classmethod
    def from_confusion(cls, cm, label_set=()) -> "MetricsReport":
        cm = np.asarray(cm, dtype=np.int64)
        p, r, f = weighted_prf(cm)
        pc, rc, _, _ = per_class_prf(cm)
        total = int(cm.sum())
        return cls(100.0 * int(np.trace(cm)) / total, p, r, f,
                   [100.0 * v for v in pc], [100.0 * v for v in rc], cm.tolist(), total, list(label_set))

    @classmethod
    def from_predictions(cls, preds, labels, n_classes, label_set=()) -> "MetricsReport":
        return cls.from_confusion(confusion_matrix(preds, labels, n_classes), label_set)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def confusion_csv(self) -> str:
        names = self.label_set or [str(i) for i in range(len(self.confusion))]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *names])
        for name, row in zip(names, self.confusion):
            w.writerow([name, *row])
        return buf.getvalue()


@dataclass
class CrossValReport:
    folds: list[MetricsReport]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.folds:
            raise ValueError("cross-validation report needs at least one fold")
        for m in METRICS:
            vals = np.array([getattr(f, m) for f in self.folds])
            self.mean[m] = float(vals.mean())
            self.std[m] = float(vals.std())

    @property
    def k(self) -> int:
        return len(self.folds)

    def to_dict(self) -> dict:
        return {"k": self.k, "mean": self.mean, "std": self.std, "folds": [f.to_dict() for f in self.folds]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        """One row per fold plus a final ``mean`` row; fixed 4-decimal formatting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", *METRICS])
        for i, f in enumerate(self.folds):
            w.writerow([i, *(f"{getattr(f, m):.4f}" for m in METRICS)])
        w.writerow(["mean", *(f"{self.mean[m]:.4f}" for m in METRICS)])
        return buf.getvalue()
