"""Accuracy, per-class F1 and MCC, and their macro averages.

Metrics are one-vs-rest per severity class, macro-averaged with equal class
weight. Zero-denominator cases score 0 by convention (the formulas are
undefined there); this matters for macro averages on rare classes, so it is
stated here rather than buried.

Unparseable model replies are never dropped: they stay in the accuracy
denominator and count as a false negative for their true class. They are
tracked in a column of their own, outside the 4x4 label-by-label counts,
because an unparseable reply is not a prediction of any label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import EmptyEvaluationError, ValidationError
from .models import SEVERITY_ORDER, Severity

_N_CLASSES = len(SEVERITY_ORDER)


@dataclass
class ConfusionMatrix:
    """counts[true][predicted] over ascending severity; unparseable[true]
    holds replies that produced no label at all."""

    counts: list[list[int]] = field(
        default_factory=lambda: [[0] * _N_CLASSES for _ in range(_N_CLASSES)]
    )
    unparseable: list[int] = field(default_factory=lambda: [0] * _N_CLASSES)

    def __post_init__(self):
        if len(self.counts) != _N_CLASSES or any(len(row) != _N_CLASSES for row in self.counts):
            raise ValidationError(f"confusion matrix must be {_N_CLASSES}x{_N_CLASSES}")
        if len(self.unparseable) != _N_CLASSES:
            raise ValidationError(f"unparseable column must have {_N_CLASSES} entries")
        for row in (*self.counts, self.unparseable):
            for value in row:
                if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                    raise ValidationError(f"counts must be non-negative integers, got {value!r}")

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts) + sum(self.unparseable)

    @property
    def unparseable_count(self) -> int:
        return sum(self.unparseable)

    def add(self, true: Severity, predicted: Severity | None) -> None:
        i = true.value - 1
        if predicted is None:
            self.unparseable[i] += 1
        else:
            self.counts[i][predicted.value - 1] += 1

    @classmethod
    def from_pairs(cls, pairs) -> "ConfusionMatrix":
        cm = cls()
        for true, predicted in pairs:
            cm.add(true, predicted)
        return cm

    def one_vs_rest(self, class_i: int) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) for one class; TP+FP+FN+TN always equals total."""
        tp = self.counts[class_i][class_i]
        fp = sum(self.counts[j][class_i] for j in range(_N_CLASSES) if j != class_i)
        fn = sum(self.counts[class_i]) + self.unparseable[class_i] - tp
        tn = self.total - tp - fp - fn
        return tp, fp, fn, tn


def _require_samples(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise EmptyEvaluationError("no samples to evaluate")


def accuracy(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return sum(cm.counts[i][i] for i in range(_N_CLASSES)) / cm.total


def per_class_precision(cm: ConfusionMatrix, class_i: int) -> float:
    _require_samples(cm)
    tp, fp, _, _ = cm.one_vs_rest(class_i)
    return tp / (tp + fp) if tp + fp else 0.0


def per_class_recall(cm: ConfusionMatrix, class_i: int) -> float:
    _require_samples(cm)
    tp, _, fn, _ = cm.one_vs_rest(class_i)
    return tp / (tp + fn) if tp + fn else 0.0


def per_class_f1(cm: ConfusionMatrix, class_i: int) -> float:
    _require_samples(cm)
    p = per_class_precision(cm, class_i)
    r = per_class_recall(cm, class_i)
    return 2 * p * r / (p + r) if p + r else 0.0


def macro_f1(cm: ConfusionMatrix) -> float:
    return math.fsum(per_class_f1(cm, i) for i in range(_N_CLASSES)) / _N_CLASSES


def per_class_mcc(cm: ConfusionMatrix, class_i: int) -> float:
    _require_samples(cm)
    tp, fp, fn, tn = cm.one_vs_rest(class_i)
    denom = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if denom == 0.0:
        return 0.0
    return (tp * tn - fp * fn) / denom


def macro_mcc(cm: ConfusionMatrix) -> float:
    return math.fsum(per_class_mcc(cm, i) for i in range(_N_CLASSES)) / _N_CLASSES


def multiclass_mcc(cm: ConfusionMatrix) -> float:
    """Standard multiclass (Gorodkin) MCC over the 4x4 counts only.

    This is NOT the macro-averaged one-vs-rest MCC the headline metric uses;
    it is reported alongside for readers who expect the sklearn definition.
    Unparseable replies are excluded here because the formula needs a
    concrete predicted label.
    """
    _require_samples(cm)
    n = _N_CLASSES
    total = sum(sum(row) for row in cm.counts)
    if total == 0:
        return 0.0
    correct = sum(cm.counts[i][i] for i in range(n))
    true_tot = [sum(cm.counts[i][j] for j in range(n)) for i in range(n)]
    pred_tot = [sum(cm.counts[i][j] for i in range(n)) for j in range(n)]
    cov = correct * total - sum(true_tot[i] * pred_tot[i] for i in range(n))
    denom_true = total * total - sum(t * t for t in true_tot)
    denom_pred = total * total - sum(p * p for p in pred_tot)
    denom = math.sqrt(denom_true) * math.sqrt(denom_pred)
    return cov / denom if denom else 0.0


@dataclass
class EvaluationReport:
    accuracy: float
    macro_f1: float
    macro_mcc: float
    per_class: list[dict]
    unparseable_count: int
    total: int
    confusion: list[list[int]]
    unparseable_by_class: list[int]
    multiclass_mcc: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "macro_mcc": self.macro_mcc,
            "per_class": self.per_class,
            "unparseable_count": self.unparseable_count,
            "total": self.total,
            "confusion": self.confusion,
            "unparseable_by_class": self.unparseable_by_class,
            "multiclass_mcc": self.multiclass_mcc,
        }


def evaluate_run(pairs) -> EvaluationReport:
    """pairs: iterable of (true Severity, predicted Severity or None)."""
    cm = ConfusionMatrix.from_pairs(pairs)
    return report_from_matrix(cm)


def report_from_matrix(cm: ConfusionMatrix) -> EvaluationReport:
    _require_samples(cm)
    per_class = []
    for i, severity in enumerate(SEVERITY_ORDER):
        per_class.append(
            {
                "severity": severity.label,
                "precision": per_class_precision(cm, i),
                "recall": per_class_recall(cm, i),
                "f1": per_class_f1(cm, i),
                "mcc": per_class_mcc(cm, i),
            }
        )
    return EvaluationReport(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        macro_mcc=macro_mcc(cm),
        per_class=per_class,
        unparseable_count=cm.unparseable_count,
        total=cm.total,
        confusion=[list(row) for row in cm.counts],
        unparseable_by_class=list(cm.unparseable),
        multiclass_mcc=multiclass_mcc(cm),
    )
