"""Confusion counting and derived evaluation metrics.

Malicious is the positive class. Any metric whose denominator is zero is
UNDEFINED, represented as ``None`` (never NaN, never silently 0) and
serialized as JSON null.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .core import Label, LeakguardError

METRIC_FIELDS = ("fnr", "fpr", "precision", "recall", "f1",
                 "sensitivity", "specificity", "ba")


class EvaluationError(LeakguardError):
    """Inconsistent evaluation inputs (missing labels/predictions, bad ids)."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self) -> None:
        for name in ("tp", "fn", "tn", "fp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fn + other.fn,
                               self.tn + other.tn, self.fp + other.fp)

    @property
    def n_positive(self) -> int:
        return self.tp + self.fn

    @property
    def n_negative(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.n_positive + self.n_negative

    def to_json_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp}


@dataclass(frozen=True)
class MetricsReport:
    """The eight derived metrics, each a fraction in [0, 1] or None."""

    counts: ConfusionCounts
    fnr: Optional[float]
    fpr: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    ba: Optional[float]

    def to_json_dict(self) -> dict:
        out: dict = {name: getattr(self, name) for name in METRIC_FIELDS}
        out["counts"] = self.counts.to_json_dict()
        return out


def confusion(labels: Mapping[str, Label], predictions: Mapping[str, Label],
              ids: Iterable[str]) -> ConfusionCounts:
    """Confusion counts over exactly ``ids``.

    Restricting to an explicit id set is what makes partitioned evaluation
    work; every id must carry both a label and a prediction.
    """
    tp = fn = tn = fp = 0
    for sample_id in sorted(set(ids)):
        if sample_id not in labels:
            raise EvaluationError(f"no label for id {sample_id!r}")
        if sample_id not in predictions:
            raise EvaluationError(f"no prediction for id {sample_id!r}")
        truth, pred = labels[sample_id], predictions[sample_id]
        if truth is Label.MALICIOUS:
            if pred is Label.MALICIOUS:
                tp += 1
            else:
                fn += 1
        else:
            if pred is Label.MALICIOUS:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fn, tn, fp)


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return None if denominator == 0 else numerator / denominator


def metrics_from_counts(c: ConfusionCounts) -> MetricsReport:
    """Derive all eight metrics from confusion counts."""
    fnr = _ratio(c.fn, c.tp + c.fn)
    fpr = _ratio(c.fp, c.tn + c.fp)
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    sensitivity = None if fnr is None else 1.0 - fnr
    specificity = None if fpr is None else 1.0 - fpr
    ba = None if sensitivity is None or specificity is None \
        else (sensitivity + specificity) / 2.0
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsReport(c, fnr, fpr, precision, recall, f1,
                         sensitivity, specificity, ba)


@dataclass(frozen=True)
class PartitionedReport:
    """Metrics over the complete test set and its leak / non-leak halves."""

    complete: MetricsReport
    leak_portion: MetricsReport
    nonleak_portion: MetricsReport
    leak_ratio: float

    def to_json_dict(self) -> dict:
        return {
            "leak_ratio": self.leak_ratio,
            "complete": self.complete.to_json_dict(),
            "leak": self.leak_portion.to_json_dict(),
            "nonleak": self.nonleak_portion.to_json_dict(),
        }


def evaluate_partitions(labels: Mapping[str, Label], predictions: Mapping[str, Label],
                        test_ids: Iterable[str], leak_ids: Iterable[str]) -> PartitionedReport:
    """Evaluate on the complete test set, the leaked part, and the remainder."""
    test = frozenset(test_ids)
    leak = frozenset(leak_ids)
    outside = leak - test
    if outside:
        raise EvaluationError(
            f"leak ids outside the test set: {sorted(outside)[:5]}")
    complete = metrics_from_counts(confusion(labels, predictions, test))
    leak_portion = metrics_from_counts(confusion(labels, predictions, leak))
    nonleak = metrics_from_counts(confusion(labels, predictions, test - leak))
    ratio = len(leak) / len(test) if test else 0.0
    return PartitionedReport(complete, leak_portion, nonleak, ratio)


@dataclass(frozen=True)
class PeriodAverage:
    """Unweighted per-period metric means with per-metric skip counts.

    Metrics undefined in a period are skipped (and counted), not absorbed
    as zeros; confusion counts are summed across periods.
    """

    periods: int
    means: dict[str, Optional[float]]
    skipped: dict[str, int]
    counts: ConfusionCounts

    def to_json_dict(self) -> dict:
        return {
            "periods": self.periods,
            "means": dict(self.means),
            "skipped": dict(self.skipped),
            "counts": self.counts.to_json_dict(),
        }


def average_over_periods(reports: Sequence[MetricsReport]) -> PeriodAverage:
    """Arithmetic mean of each metric over the periods where it is defined."""
    if not reports:
        raise ValueError("no reports to average")
    means: dict[str, Optional[float]] = {}
    skipped: dict[str, int] = {}
    for name in METRIC_FIELDS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        skipped[name] = len(reports) - len(values)
        means[name] = sum(values) / len(values) if values else None
    total = ConfusionCounts(0, 0, 0, 0)
    for r in reports:
        total = total + r.counts
    return PeriodAverage(len(reports), means, skipped, total)


def pooled_metrics(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Metrics over the pooled confusion counts of all periods.

    The alternative aggregation to per-period averaging; named separately
    so the two are never conflated.
    """
    if not reports:
        raise ValueError("no reports to pool")
    total = ConfusionCounts(0, 0, 0, 0)
    for r in reports:
        total = total + r.counts
    return metrics_from_counts(total)
