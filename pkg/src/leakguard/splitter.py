"""Class-ratio-controlled batches and temporally sound sliding windows.

Malicious samples are chunked chronologically into fixed-size groups;
each group is topped up with benign samples drawn (seeded, without
replacement across batches) from the group's time range, giving every
batch the exact target malware ratio. Windows then cover consecutive
batch runs split into train/validation/test segments, so training data
never post-dates evaluation data.
"""

from __future__ import annotations

import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    Dataset,
    Label,
    LeakguardError,
    Timestamp,
    Violation,
    require_same_schema,
)

logger = logging.getLogger("leakguard.splitter")


class SplitError(LeakguardError):
    """Batch or window construction cannot satisfy its contract."""


@dataclass(frozen=True)
class BatchSpec:
    """Per-batch class counts; the defaults give a 6% malware ratio."""

    malicious_per_batch: int = 240
    benign_per_batch: int = 3760
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.malicious_per_batch <= 0 or self.benign_per_batch <= 0:
            raise ValueError("per-batch class counts must be positive")

    @property
    def batch_size(self) -> int:
        return self.malicious_per_batch + self.benign_per_batch

    @property
    def malware_ratio(self) -> float:
        return self.malicious_per_batch / self.batch_size


@dataclass(frozen=True)
class Batch:
    index: int
    sample_ids: tuple[str, ...]
    time_range: tuple[Timestamp, Timestamp]

    def to_json_dict(self) -> dict:
        return {"index": self.index, "ids": list(self.sample_ids)}


@dataclass(frozen=True)
class WindowSpec:
    """Window geometry: consecutive batches split train/validation/test."""

    window_len: int = 10
    train_len: int = 6
    val_len: int = 2
    test_len: int = 2
    stride: int = 2

    def __post_init__(self) -> None:
        if self.train_len + self.val_len + self.test_len != self.window_len:
            raise ValueError(
                f"train {self.train_len} + val {self.val_len} + test {self.test_len}"
                f" must equal window_len {self.window_len}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if min(self.train_len, self.val_len, self.test_len) < 0:
            raise ValueError("segment lengths must be non-negative")


@dataclass(frozen=True)
class Window:
    train: tuple[Batch, ...]
    validation: tuple[Batch, ...]
    test: tuple[Batch, ...]

    def to_json_dict(self) -> dict:
        return {"train": [b.index for b in self.train],
                "val": [b.index for b in self.validation],
                "test": [b.index for b in self.test]}


def build_batches(ds: Dataset, spec: BatchSpec, *,
                  require_batches: bool = False) -> list[Batch]:
    """Chunk malicious samples chronologically and sample benign fill.

    Benign samples are drawn uniformly at random (seeded) from the unused
    benign samples inside each batch's malicious time range, without
    replacement across batches. A trailing malicious group too small for
    a full batch is dropped with a logged count.
    """
    malicious = [s for s in ds.samples if s.label is Label.MALICIOUS]
    benign = [s for s in ds.samples if s.label is Label.BENIGN]
    n_batches = len(malicious) // spec.malicious_per_batch
    dropped = len(malicious) - n_batches * spec.malicious_per_batch
    if dropped:
        logger.warning("dropping %d trailing malicious samples (not enough for a batch)",
                       dropped)
    if n_batches == 0:
        message = (f"only {len(malicious)} malicious samples; "
                   f"{spec.malicious_per_batch} needed per batch")
        if require_batches:
            raise SplitError(message)
        logger.warning("%s; producing zero batches", message)
        return []

    rng = np.random.default_rng(spec.rng_seed)
    benign_keys = [s.timestamp.sort_key for s in benign]  # non-decreasing
    used: set[str] = set()
    batches = []
    for b in range(n_batches):
        chunk = malicious[b * spec.malicious_per_batch:(b + 1) * spec.malicious_per_batch]
        lo, hi = chunk[0].timestamp, chunk[-1].timestamp
        span = benign[bisect_left(benign_keys, lo.sort_key):
                      bisect_right(benign_keys, hi.sort_key)]
        eligible = [s for s in span if s.id not in used]
        if len(eligible) < spec.benign_per_batch:
            raise SplitError(
                f"batch {b}: need {spec.benign_per_batch} benign samples in "
                f"[{lo}, {hi}], only {len(eligible)} available "
                f"(deficit {spec.benign_per_batch - len(eligible)})")
        pick = rng.choice(len(eligible), size=spec.benign_per_batch, replace=False)
        chosen = [eligible[i] for i in sorted(pick)]
        used.update(s.id for s in chosen)
        members = sorted(chunk + chosen, key=lambda s: (s.timestamp.sort_key, s.id))
        batches.append(Batch(b, tuple(s.id for s in members), (lo, hi)))
    return batches


def build_sliding_windows(batches: Sequence[Batch], spec: WindowSpec) -> list[Window]:
    """Windows of ``window_len`` consecutive batches advanced by ``stride``.

    Window k covers batches [k*stride, k*stride + window_len); trailing
    batches that cannot fill a window are dropped.
    """
    if len(batches) < spec.window_len:
        raise SplitError(
            f"{len(batches)} batches < window length {spec.window_len}")
    count = (len(batches) - spec.window_len) // spec.stride + 1
    windows = []
    for k in range(count):
        start = k * spec.stride
        run = tuple(batches[start:start + spec.window_len])
        windows.append(Window(
            run[:spec.train_len],
            run[spec.train_len:spec.train_len + spec.val_len],
            run[spec.train_len + spec.val_len:],
        ))
    return windows


def lint_split(train: Dataset, test: Dataset, *,
               target_malware_ratio: Optional[float] = None,
               ratio_tolerance: float = 0.02) -> list[Violation]:
    """Flag temporal and spatial bias in a train/test split.

    Emits a temporal-bias Violation for each test sample strictly older
    than the newest training sample. When ``target_malware_ratio`` is
    given, adds a spatial-bias Violation if the test malware ratio is
    more than ``ratio_tolerance`` away from it.
    """
    require_same_schema(train, test)
    violations = []
    if len(train) and len(test):
        newest = train.max_timestamp()
        for s in test.samples:
            if s.timestamp.sort_key < newest.sort_key:
                violations.append(Violation(
                    "temporal-bias", s.id,
                    f"test sample dated {s.timestamp} predates newest "
                    f"training sample ({newest})"))
    if target_malware_ratio is not None and len(test):
        measured = test.malware_ratio()
        if abs(measured - target_malware_ratio) > ratio_tolerance:
            violations.append(Violation(
                "spatial-bias", None,
                f"test malware ratio {measured:.4f} outside "
                f"{target_malware_ratio} +/- {ratio_tolerance}"))
    return violations


def window_plan_json(batches: Sequence[Batch], windows: Sequence[Window]) -> dict:
    """Serializable plan: window batch indices plus batch membership."""
    return {
        "windows": [w.to_json_dict() for w in windows],
        "batches": [b.to_json_dict() for b in batches],
    }


def window_datasets(ds: Dataset, window: Window) -> tuple[Dataset, Dataset, Dataset]:
    """Materialize a window's train/validation/test sample subsets."""
    def collect(segment: tuple[Batch, ...]) -> Dataset:
        ids = [i for b in segment for i in b.sample_ids]
        return ds.subset(ids)
    return collect(window.train), collect(window.validation), collect(window.test)
