"""Confusion matrices, macro-F1 and run aggregation."""

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import Label
from .errors import EmptyInputError

N_CLASSES = len(Label)


@dataclass
class ConfusionMatrix:
    """Rows are true labels, columns predicted labels, in :class:`Label` order."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_CLASSES, N_CLASSES) or np.any(self.counts < 0):
            raise ValueError("confusion counts must be a non-negative 3x3 integer matrix")

    @property
    def total(self):
        return int(self.counts.sum())

    def support(self):
        return self.counts.sum(axis=1)

    def tolist(self):
        return self.counts.tolist()

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)


@dataclass
class F1Report:
    per_class_precision: tuple
    per_class_recall: tuple
    per_class_f1: tuple
    macro_f1: float

    def to_dict(self):
        return {
            "per_class_precision": list(self.per_class_precision),
            "per_class_recall": list(self.per_class_recall),
            "per_class_f1": list(self.per_class_f1),
            "macro_f1": self.macro_f1,
        }


def confusion_matrix(true_labels, predicted_labels):
    true_labels = [int(t) for t in true_labels]
    predicted_labels = [int(p) for p in predicted_labels]
    if len(true_labels) != len(predicted_labels):
        raise ValueError(f"{len(true_labels)} true labels vs {len(predicted_labels)} predictions")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        counts[t, p] += 1
    return ConfusionMatrix(counts)


def _ratio(num, den):
    return num / den if den else 0.0


def f1_from_confusion(cm):
    """Per-class precision/recall/F1 and their unweighted mean; 0/0 counts as 0."""
    c = cm.counts
    precision, recall, f1 = [], [], []
    for k in range(N_CLASSES):
        tp = int(c[k, k])
        p = _ratio(tp, int(c[:, k].sum()))
        r = _ratio(tp, int(c[k, :].sum()))
        precision.append(p)
        recall.append(r)
        f1.append(_ratio(2 * p * r, p + r))
    return F1Report(tuple(precision), tuple(recall), tuple(f1), sum(f1) / N_CLASSES)


def aggregate_runs(values):
    """Mean and sample (n - 1) standard deviation; std is 0 for one value."""
    values = [float(v) for v in values]
    if not values:
        raise EmptyInputError("cannot aggregate an empty list of runs")
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def format_mean_std(mean, std):
    return f"{mean:.2f}±{std:.2f}"
