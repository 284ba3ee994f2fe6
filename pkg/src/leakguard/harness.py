"""Continuous-evaluation replay and the leak-aware detector.

The harness folds scheduled sample additions into a growing training
pool, audits each evaluation period against the pool, and reports
metrics on the complete/leak/non-leak partitions. The leak-aware
detector answers matched samples by majority vote over every matching
training label and defers to the model otherwise; it is a measurement
instrument, so the pool is re-audited per evaluation instead of
maintaining signature indexes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import dataio
from .core import (
    Dataset,
    Label,
    LeakguardError,
    Sample,
    Schema,
    require_same_schema,
)
from .leakage import LeakageReport, leak_report
from .metrics import EvaluationError, PartitionedReport, evaluate_partitions

logger = logging.getLogger("leakguard.harness")

TIE_RULES = ("model_fallback", "predict_malicious", "predict_benign")
MATCHERS = ("exact", "near", "union")


class HarnessError(LeakguardError):
    """Continuous-evaluation protocol violation."""


@dataclass(frozen=True)
class PredictionSet:
    """Named model output: an id -> predicted label map."""

    model_name: str
    predictions: dict[str, Label]

    def require_covers(self, ids: Iterable[str]) -> None:
        missing = [i for i in ids if i not in self.predictions]
        if missing:
            raise EvaluationError(
                f"{self.model_name}: missing predictions for {sorted(missing)[:5]}"
                f" ({len(missing)} total)")


def ingest_predictions(path) -> PredictionSet:
    """Read a predictions JSONL file; the model name is the file stem."""
    p = Path(path)
    return PredictionSet(p.stem, dataio.load_predictions(p))


@dataclass(frozen=True)
class LeakAwareConfig:
    """How the detector matches pool samples and breaks vote ties."""

    matcher: str = "exact"
    threshold: Optional[float] = None
    tie_rule: str = "model_fallback"

    def __post_init__(self) -> None:
        if self.matcher not in MATCHERS:
            raise ValueError(f"unknown matcher {self.matcher!r} (expected {MATCHERS})")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"unknown tie rule {self.tie_rule!r} (expected {TIE_RULES})")
        if self.matcher in ("near", "union"):
            if self.threshold is None or not 0.0 < self.threshold <= 1.0:
                raise ValueError(
                    f"matcher {self.matcher!r} needs a threshold in (0, 1]")


class TrainingPool:
    """Growing set of training samples; membership never shrinks."""

    def __init__(self, initial: Dataset):
        self._members: dict[str, Sample] = {s.id: s for s in initial.samples}
        self._schema = initial.schema
        self._generation = 0
        self._cache: Optional[Dataset] = None

    @property
    def generation(self) -> int:
        return self._generation

    def __len__(self) -> int:
        return len(self._members)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._members

    def add(self, samples: Iterable[Sample]) -> int:
        """Apply one addition; re-adding an identical sample is a no-op."""
        for s in samples:
            existing = self._members.get(s.id)
            if existing is None:
                self._members[s.id] = s
                self._cache = None
            elif existing != s:
                raise HarnessError(
                    f"pool already holds a different sample with id {s.id!r}")
        self._generation += 1
        return self._generation

    def as_dataset(self) -> Dataset:
        if self._cache is None:
            self._cache = Dataset(self._members.values(), self._schema)
        return self._cache

    def max_timestamp(self):
        return self.as_dataset().max_timestamp()


@dataclass(frozen=True)
class AdditionEntry:
    period: str
    add_ids: tuple[str, ...]
    budget: int

    def __post_init__(self) -> None:
        if len(self.add_ids) > self.budget:
            raise ValueError(
                f"period {self.period!r}: {len(self.add_ids)} additions exceed "
                f"budget {self.budget}")

    def to_json_dict(self) -> dict:
        return {"period": self.period, "add_ids": list(self.add_ids),
                "budget": self.budget}


class AdditionsSchedule:
    """Per-period lists of sample ids to label and add to the pool."""

    def __init__(self, entries: Iterable[AdditionEntry] = ()):
        self._entries: dict[str, AdditionEntry] = {}
        for e in entries:
            if e.period in self._entries:
                raise ValueError(f"duplicate schedule entry for period {e.period!r}")
            self._entries[e.period] = e

    def for_period(self, label: str) -> Optional[AdditionEntry]:
        return self._entries.get(label)

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def load_jsonl(cls, path) -> "AdditionsSchedule":
        entries = []
        for lineno, obj in dataio._iter_jsonl(Path(path)):
            try:
                entries.append(AdditionEntry(
                    str(obj["period"]),
                    tuple(str(i) for i in obj.get("add_ids", [])),
                    int(obj.get("budget", len(obj.get("add_ids", [])))),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise dataio.DataFormatError(f"bad schedule entry: {exc}",
                                             path=str(path), line=lineno) from None
        return cls(entries)

    def save_jsonl(self, path) -> None:
        import json
        with Path(path).open("w", encoding="utf-8") as fh:
            for e in self._entries.values():
                fh.write(json.dumps(e.to_json_dict()) + "\n")


@dataclass(frozen=True)
class Period:
    """One evaluation period: a label (e.g. the month) and its samples."""

    label: str
    data: Dataset


@dataclass(frozen=True)
class PeriodResult:
    period: str
    pool_size: int
    leak_report: LeakageReport
    report: PartitionedReport

    def to_json_dict(self) -> dict:
        out: dict = {"period": self.period, "pool_size": self.pool_size}
        out.update(self.report.to_json_dict())
        return out


def run_continuous_eval(
    initial_train: Dataset,
    periods: Sequence[Period],
    schedule: AdditionsSchedule,
    predictions: Mapping[str, PredictionSet],
    leak_cfg: Optional[LeakAwareConfig] = None,
    *,
    validation: Sequence[Dataset] = (),
    validation_in_pool: bool = False,
    workers: int = 1,
) -> list[PeriodResult]:
    """Replay the evolving-pool evaluation protocol.

    For each period, in order: audit the period against the current pool
    (exact matching unless ``leak_cfg`` says otherwise), evaluate that
    period's predictions on the complete/leak/non-leak partitions, then
    apply the period's scheduled additions so they count for the next
    period. Pool growth is driven purely by the schedule, never by the
    evaluation results. ``validation_in_pool`` folds the ``validation``
    datasets into the pool before the first period; whether that matches
    any published protocol is the caller's decision.
    """
    pool = TrainingPool(initial_train)
    if validation_in_pool:
        for ds in validation:
            pool.add(ds.samples)
    matcher = leak_cfg.matcher if leak_cfg else "exact"
    threshold = leak_cfg.threshold if leak_cfg else None

    results = []
    previous_start = None
    for period in periods:
        if len(period.data) == 0:
            raise HarnessError(f"period {period.label!r} is empty")
        start = period.data.min_timestamp()
        if previous_start is not None and start.sort_key < previous_start:
            raise HarnessError(f"period {period.label!r} is out of time order")
        previous_start = start.sort_key
        if len(pool) and start.sort_key < pool.max_timestamp().sort_key:
            raise HarnessError(
                f"temporal-bias violation: period {period.label!r} starts {start}, "
                f"before the pool's newest training sample "
                f"({pool.max_timestamp()})")

        prediction_set = predictions.get(period.label)
        if prediction_set is None:
            raise EvaluationError(f"no predictions for period {period.label!r}")
        prediction_set.require_covers(period.data.ids)

        pool_ds = pool.as_dataset()
        report = leak_report(pool_ds, period.data, matcher, threshold, workers=workers)
        partitioned = evaluate_partitions(
            period.data.labels(), prediction_set.predictions,
            period.data.ids, report.leak_ids)
        results.append(PeriodResult(period.label, len(pool), report, partitioned))

        entry = schedule.for_period(period.label)
        if entry is not None:
            missing = [i for i in entry.add_ids if i not in period.data]
            if missing:
                raise HarnessError(
                    f"schedule for period {period.label!r} names ids absent from "
                    f"that period: {missing[:5]}")
            pool.add(period.data.by_id(i) for i in entry.add_ids)
    return results


def _vote(labels: Sequence[Label], cfg: LeakAwareConfig,
          model_prediction: Label) -> tuple[Label, str]:
    malicious = sum(1 for lb in labels if lb is Label.MALICIOUS)
    benign = len(labels) - malicious
    if malicious > benign:
        return Label.MALICIOUS, "memorized"
    if benign > malicious:
        return Label.BENIGN, "memorized"
    if cfg.tie_rule == "predict_malicious":
        return Label.MALICIOUS, "memorized"
    if cfg.tie_rule == "predict_benign":
        return Label.BENIGN, "memorized"
    return model_prediction, "model"


def leak_aware_predict(test: Sample, pool: TrainingPool, cfg: LeakAwareConfig,
                       model_prediction: Label) -> tuple[Label, str]:
    """Majority vote over all matching pool members, else the model.

    Returns (label, provenance) where provenance is "memorized" when the
    vote decided and "model" otherwise (including the default tie rule).
    """
    pool_ds = pool.as_dataset()
    rep = test.representation
    single = Dataset([test], Schema(rep.kind, rep.dim))
    report = leak_report(pool_ds, single, cfg.matcher, cfg.threshold)
    if not report.matches:
        return model_prediction, "model"
    matched = report.matches[0].train_ids
    return _vote([pool_ds.by_id(i).label for i in matched], cfg, model_prediction)


@dataclass(frozen=True)
class LeakAwareEvaluation:
    """Raw model vs leak-aware composite on identical partitions."""

    standalone: PartitionedReport
    leak_aware: PartitionedReport
    provenance_counts: dict[str, int]
    leak_report: LeakageReport

    def to_json_dict(self) -> dict:
        return {
            "standalone": self.standalone.to_json_dict(),
            "leak_aware": self.leak_aware.to_json_dict(),
            "provenance": dict(self.provenance_counts),
        }


def leak_aware_evaluate(train: Dataset, test: Dataset, cfg: LeakAwareConfig,
                        predictions: PredictionSet, *,
                        workers: int = 1) -> LeakAwareEvaluation:
    """Evaluate a model standalone and wrapped by the leak-aware detector."""
    predictions.require_covers(test.ids)
    report = leak_report(train, test, cfg.matcher, cfg.threshold, workers=workers)
    labels = test.labels()
    standalone = evaluate_partitions(labels, predictions.predictions,
                                     test.ids, report.leak_ids)
    matched = {m.test_id: m.train_ids for m in report.matches}
    composite: dict[str, Label] = {}
    counts = {"memorized": 0, "model": 0}
    for s in test.samples:
        model_prediction = predictions.predictions[s.id]
        if s.id in matched:
            label, provenance = _vote(
                [train.by_id(i).label for i in matched[s.id]], cfg, model_prediction)
        else:
            label, provenance = model_prediction, "model"
        composite[s.id] = label
        counts[provenance] += 1
    leak_aware = evaluate_partitions(labels, composite, test.ids, report.leak_ids)
    return LeakAwareEvaluation(standalone, leak_aware, counts, report)


BASELINES = ("exact_memorizer", "knn", "centroid")


def _majority(labels: Iterable[Label], tie: Label = Label.BENIGN) -> Label:
    malicious = benign = 0
    for lb in labels:
        if lb is Label.MALICIOUS:
            malicious += 1
        else:
            benign += 1
    if malicious == benign:
        return tie
    return Label.MALICIOUS if malicious > benign else Label.BENIGN


def baseline_predict(train: Dataset, test: Dataset, kind: str, *,
                     k: int = 3) -> PredictionSet:
    """Self-contained reference models for demos and acceptance checks.

    exact_memorizer answers the majority label of exact matches and the
    training majority class otherwise; knn votes over the k nearest
    neighbors (cosine for embeddings, Jaccard for binary vectors);
    centroid picks the nearer class centroid of embeddings.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    require_same_schema(train, test)
    if kind == "exact_memorizer":
        return _exact_memorizer(train, test)
    if kind == "knn":
        if k < 1 or k % 2 == 0:
            raise ValueError(f"k must be odd and positive, got {k}")
        return _knn(train, test, k)
    if kind == "centroid":
        return _centroid(train, test)
    raise ValueError(f"unknown baseline {kind!r} (expected {BASELINES})")


def _exact_memorizer(train: Dataset, test: Dataset) -> PredictionSet:
    buckets: dict = {}
    for s in train.samples:
        buckets.setdefault(s.representation.key(), []).append(s.label)
    fallback = _majority((s.label for s in train.samples))
    out = {}
    for s in test.samples:
        hit = buckets.get(s.representation.key())
        out[s.id] = _majority(hit, tie=fallback) if hit else fallback
    return PredictionSet("exact_memorizer", out)


def _knn(train: Dataset, test: Dataset, k: int) -> PredictionSet:
    schema = require_same_schema(train, test)
    train_labels = [s.label for s in train.samples]
    out = {}
    if schema.kind == "embedding":
        from .leakage import _pair_similarities
        for start, block in _pair_similarities(train, test, 1):
            order = np.argsort(-block, axis=1, kind="stable")
            for row in range(block.shape[0]):
                nearest = order[row, :k]
                out[test.samples[start + row].id] = _majority(
                    train_labels[j] for j in nearest)
    else:
        train_sets = [frozenset(s.representation.indices) for s in train.samples]
        for s in test.samples:
            mine = frozenset(s.representation.indices)
            sims = []
            for j, other in enumerate(train_sets):
                union = len(mine | other)
                sims.append(len(mine & other) / union if union else 1.0)
            nearest = sorted(range(len(sims)), key=lambda j: (-sims[j], j))[:k]
            out[s.id] = _majority(train_labels[j] for j in nearest)
    return PredictionSet(f"knn{k}", out)


def _centroid(train: Dataset, test: Dataset) -> PredictionSet:
    schema = require_same_schema(train, test)
    if schema.kind != "embedding":
        raise ValueError("centroid baseline needs embeddings")
    groups: dict[Label, list[np.ndarray]] = {Label.BENIGN: [], Label.MALICIOUS: []}
    for s in train.samples:
        groups[s.label].append(s.representation.values.astype(np.float64))
    present = {lb: np.mean(vs, axis=0) for lb, vs in groups.items() if vs}
    out = {}
    for s in test.samples:
        v = s.representation.values.astype(np.float64)
        if len(present) == 1:
            out[s.id] = next(iter(present))
            continue
        d_benign = float(np.linalg.norm(v - present[Label.BENIGN]))
        d_malicious = float(np.linalg.norm(v - present[Label.MALICIOUS]))
        out[s.id] = Label.MALICIOUS if d_malicious < d_benign else Label.BENIGN
    return PredictionSet("centroid", out)
