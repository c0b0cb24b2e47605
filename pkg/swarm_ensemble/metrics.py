import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from sklearn.metrics import accuracy_score, precision_score, recall_score
from sklearn.metrics import confusion_matrix as label_confusion_matrix

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed (truth, predicted) over labels 0..C, kept with the label vectors they came from.

    Label 0 is background.
    """

    truth: np.ndarray
    predicted: np.ndarray
    counts: np.ndarray

    @property
    def class_count(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def object_labels(self) -> np.ndarray:
        return np.arange(1, self.class_count + 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts)[1:]

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0)[1:] - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1)[1:] - self.tp

    @property
    def support(self) -> np.ndarray:
        """N_c for the object classes 1..C."""
        return self.counts.sum(axis=1)[1:]

    @property
    def n_total(self) -> int:
        return int(self.support.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise DataError(f"cannot pool confusion matrices of shapes {self.counts.shape} and {other.counts.shape}")
        return ConfusionMatrix(np.concatenate([self.truth, other.truth]),
                               np.concatenate([self.predicted, other.predicted]),
                               self.counts + other.counts)


@dataclass(frozen=True)
class FitnessWeights:
    w_a: float = 0.5
    w_p: float = 0.3
    w_r: float = 0.2

    def __post_init__(self):
        if min(self.w_a, self.w_p, self.w_r) < 0 or self.total <= 0:
            raise ConfigError(f"fitness weights must be non-negative with a positive sum, got {self}")

    @property
    def total(self) -> float:
        return self.w_a + self.w_p + self.w_r


def confusion_matrix(predicted: np.ndarray, truth: np.ndarray, class_count: int) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise DataError(f"predicted and truth lengths differ ({predicted.shape} vs {truth.shape})")
    if len(truth) == 0:
        raise DataError("cannot build a confusion matrix from empty label vectors")
    for name, labels in (("predicted", predicted), ("truth", truth)):
        if labels.min() < 0 or labels.max() > class_count:
            raise DataError(f"{name} label outside 0..{class_count}")
    counts = label_confusion_matrix(truth, predicted, labels=np.arange(class_count + 1))
    return ConfusionMatrix(truth, predicted, counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DataError("accuracy of an empty confusion matrix")
    return float(accuracy_score(cm.truth, cm.predicted))


def _class_shares(cm: ConfusionMatrix) -> np.ndarray:
    if cm.n_total == 0:
        raise DataError("no object-class regions (N_Total = 0)")
    return cm.support / cm.n_total


def per_class_precision(cm: ConfusionMatrix) -> np.ndarray:
    # a class that is never predicted scores 0
    return precision_score(cm.truth, cm.predicted, labels=cm.object_labels, average=None, zero_division=0)


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    return recall_score(cm.truth, cm.predicted, labels=cm.object_labels, average=None, zero_division=0)


def precision_avg(cm: ConfusionMatrix) -> float:
    return float(np.sum(per_class_precision(cm) * _class_shares(cm)))


def recall_avg(cm: ConfusionMatrix) -> float:
    return float(np.sum(per_class_recall(cm) * _class_shares(cm)))


def fitness(cm: ConfusionMatrix, fw: FitnessWeights) -> float:
    return fw.w_p * precision_avg(cm) + fw.w_r * recall_avg(cm) + fw.w_a * accuracy(cm)


def tolerant_fitness(cm: ConfusionMatrix, fw: FitnessWeights) -> float:
    """Fitness that falls back to accuracy alone, rescaled to the full weight, without object regions."""
    if cm.n_total == 0:
        return fw.total * accuracy(cm)
    return fitness(cm, fw)


def metrics_report(cm: ConfusionMatrix, fw: FitnessWeights) -> Dict[str, Any]:
    """The JSON-ready metrics block: headline numbers, per-class counts and the raw matrix."""
    precision = per_class_precision(cm)
    recall = per_class_recall(cm)
    degenerate = cm.n_total == 0
    if degenerate:
        logger.warning(f"no object-class regions among {cm.total}, fitness uses accuracy only")
    per_class = {
        str(c + 1): {
            "support": int(cm.support[c]),
            "tp": int(cm.tp[c]),
            "fp": int(cm.fp[c]),
            "fn": int(cm.fn[c]),
            "precision": float(precision[c]),
            "recall": float(recall[c]),
        }
        for c in range(cm.class_count)
    }
    return {
        "accuracy": accuracy(cm),
        "precision_avg": None if degenerate else precision_avg(cm),
        "recall_avg": None if degenerate else recall_avg(cm),
        "fitness": tolerant_fitness(cm, fw),
        "per_class": per_class,
        "confusion": cm.counts.tolist(),
    }
