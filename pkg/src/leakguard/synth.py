"""Seeded synthetic datasets with planted duplicate structure and drift.

Every sampling decision flows through one numpy ``default_rng`` (PCG64)
stream consumed in a fixed order, so a seed pins the dataset bit for bit
on every platform. The generator name and version are exported for
output headers; fixtures written by one build stay reproducible by any
other.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    BinaryFeatureVector,
    Dataset,
    DenseEmbedding,
    Label,
    LeakguardError,
    Sample,
    Timestamp,
)
from .harness import PredictionSet
from .leakage import exact_leak_set
from .metrics import evaluate_partitions

logger = logging.getLogger("leakguard.synth")

GENERATOR_NAME = "numpy-default-rng-pcg64"
GENERATOR_VERSION = 1

# fresh binary draws: per-feature activation probabilities
_TEMPLATE_ON = 0.85
_OFF_TEMPLATE_ON = 0.03
# embedding class centroids sit this far apart (unit noise)
_CENTROID_SEPARATION = 6.0


class FixtureError(LeakguardError):
    """A synthetic fixture could not realize its required phenomenon."""


@dataclass(frozen=True)
class BinarySpec:
    dim: int = 128
    density: float = 0.25

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if not 0.0 < self.density < 1.0:
            raise ValueError("density must be in (0, 1)")


@dataclass(frozen=True)
class EmbeddingSpec:
    dim: int = 32

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")


RepresentationSpec = Union[BinarySpec, EmbeddingSpec]


@dataclass(frozen=True)
class SynthConfig:
    n_periods: int
    samples_per_period: int
    malware_ratio: float = 0.06
    leak_rate: float = 0.0
    near_leak_jitter: float = 0.0
    drift_rate: float = 0.0
    representation: RepresentationSpec = EmbeddingSpec()
    duplicate_label_flip: float = 0.0
    duplicate_window: Optional[int] = None
    seed: int = 0
    start: str = "2020-01"

    def __post_init__(self) -> None:
        if self.n_periods <= 0 or self.samples_per_period <= 0:
            raise ValueError("n_periods and samples_per_period must be positive")
        for name in ("malware_ratio", "leak_rate", "duplicate_label_flip"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.near_leak_jitter < 0 or self.drift_rate < 0:
            raise ValueError("near_leak_jitter and drift_rate must be >= 0")
        if self.duplicate_window is not None and self.duplicate_window < 1:
            raise ValueError("duplicate_window must be >= 1 when set")
        Timestamp.parse(self.start)


@dataclass(frozen=True)
class PlantedDuplicate:
    dup_id: str
    source_id: str
    exact: bool

    def to_json_dict(self) -> dict:
        return {"dup_id": self.dup_id, "source_id": self.source_id, "exact": self.exact}


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    ground_truth: tuple[PlantedDuplicate, ...]
    period_labels: tuple[str, ...]


def _month_after(start: Timestamp, offset: int) -> Timestamp:
    total = start.year * 12 + (start.month - 1) + offset
    return Timestamp(total // 12, total % 12 + 1)


class _BinaryClassModel:
    """Per-class feature templates; drift swaps template features per period."""

    def __init__(self, spec: BinarySpec, drift_rate: float, rng: np.random.Generator):
        self.spec = spec
        self.drift_rate = drift_rate
        size = max(1, round(spec.density * spec.dim))
        features = rng.permutation(spec.dim)
        self.templates = {
            Label.BENIGN: set(features[:size].tolist()),
            Label.MALICIOUS: set(features[size:2 * size].tolist())
            if 2 * size <= spec.dim else set(features[-size:].tolist()),
        }

    def advance(self, rng: np.random.Generator) -> None:
        for label in (Label.BENIGN, Label.MALICIOUS):
            template = self.templates[label]
            swaps = round(self.drift_rate * len(template))
            if swaps == 0:
                continue
            outside = np.array(sorted(set(range(self.spec.dim)) - template))
            current = np.array(sorted(template))
            drop = rng.choice(len(current), size=min(swaps, len(current)), replace=False)
            add = rng.choice(len(outside), size=min(swaps, len(outside)), replace=False)
            template -= {int(current[i]) for i in drop}
            template |= {int(outside[i]) for i in add}

    def draw(self, label: Label, rng: np.random.Generator) -> BinaryFeatureVector:
        probs = np.full(self.spec.dim, _OFF_TEMPLATE_ON)
        probs[sorted(self.templates[label])] = _TEMPLATE_ON
        active = np.nonzero(rng.random(self.spec.dim) < probs)[0]
        return BinaryFeatureVector(self.spec.dim, tuple(int(i) for i in active))


class _EmbeddingClassModel:
    """Gaussian classes around separated centroids; drift displaces centroids."""

    def __init__(self, spec: EmbeddingSpec, drift_rate: float, rng: np.random.Generator):
        self.spec = spec
        self.drift_rate = drift_rate
        axis = rng.standard_normal(spec.dim)
        axis /= np.linalg.norm(axis)
        offset = axis * (_CENTROID_SEPARATION / 2.0)
        self.centroids = {Label.BENIGN: -offset, Label.MALICIOUS: offset}
        self.drift_dirs = {}
        for label in (Label.BENIGN, Label.MALICIOUS):
            d = rng.standard_normal(spec.dim)
            self.drift_dirs[label] = d / np.linalg.norm(d)

    def advance(self, rng: np.random.Generator) -> None:
        for label in (Label.BENIGN, Label.MALICIOUS):
            self.centroids[label] = (self.centroids[label]
                                     + self.drift_rate * self.drift_dirs[label])

    def draw(self, label: Label, rng: np.random.Generator) -> DenseEmbedding:
        return DenseEmbedding(self.centroids[label] + rng.standard_normal(self.spec.dim))


def _jitter(rep: DenseEmbedding, magnitude: float, rng: np.random.Generator) -> DenseEmbedding:
    noise = 1.0 + rng.uniform(-magnitude, magnitude, size=rep.dim)
    return DenseEmbedding(rep.values.astype(np.float64) * noise)


def gen_synthetic(cfg: SynthConfig) -> SynthResult:
    """Generate a multi-period dataset with planted duplicates.

    Each sample is, with probability ``leak_rate``, a duplicate of a
    uniformly chosen sample from an earlier period (the last
    ``duplicate_window`` periods when set): an exact copy, or for
    embeddings a multiplicatively jittered copy when ``near_leak_jitter``
    is positive. Duplicates inherit the source label, flipped with
    probability ``duplicate_label_flip``. Remaining slots are fresh draws
    from the period's drifting class distributions, labeled to keep each
    period at the target malware ratio.
    """
    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.representation, BinarySpec):
        model: Union[_BinaryClassModel, _EmbeddingClassModel] = \
            _BinaryClassModel(cfg.representation, cfg.drift_rate, rng)
        can_jitter = False
    else:
        model = _EmbeddingClassModel(cfg.representation, cfg.drift_rate, rng)
        can_jitter = cfg.near_leak_jitter > 0
    start = Timestamp.parse(cfg.start)

    samples: list[Sample] = []
    per_period: list[list[Sample]] = []
    ground_truth: list[PlantedDuplicate] = []
    labels: list[str] = []

    for p in range(cfg.n_periods):
        if p > 0:
            model.advance(rng)
        ts = _month_after(start, p)
        labels.append(ts.isoformat())
        n = cfg.samples_per_period
        window_start = 0 if cfg.duplicate_window is None else max(0, p - cfg.duplicate_window)
        pool = [s for block in per_period[window_start:p] for s in block]

        dup_flags = (rng.random(n) < cfg.leak_rate) if pool else np.zeros(n, dtype=bool)
        n_dups = int(dup_flags.sum())
        sources = rng.integers(0, len(pool), size=n_dups) if n_dups else np.empty(0, int)
        flips = rng.random(n_dups) < cfg.duplicate_label_flip

        dup_labels = []
        for src, flip in zip(sources, flips):
            label = pool[src].label
            if flip:
                label = Label.BENIGN if label is Label.MALICIOUS else Label.MALICIOUS
            dup_labels.append(label)
        dup_malicious = sum(1 for lb in dup_labels if lb is Label.MALICIOUS)

        n_fresh = n - n_dups
        target_malicious = round(n * cfg.malware_ratio)
        fresh_malicious = min(max(target_malicious - dup_malicious, 0), n_fresh)
        fresh_label_order = rng.permutation(n_fresh)
        fresh_labels = [Label.BENIGN] * n_fresh
        for idx in fresh_label_order[:fresh_malicious]:
            fresh_labels[idx] = Label.MALICIOUS

        period_samples: list[Sample] = []
        dup_cursor = fresh_cursor = 0
        for i in range(n):
            sample_id = f"p{p:03d}-s{i:05d}"
            if dup_flags[i]:
                source = pool[sources[dup_cursor]]
                label = dup_labels[dup_cursor]
                dup_cursor += 1
                if can_jitter:
                    rep = _jitter(source.representation, cfg.near_leak_jitter, rng)
                    exact = False
                else:
                    rep = source.representation
                    exact = True
                ground_truth.append(PlantedDuplicate(sample_id, source.id, exact))
            else:
                label = fresh_labels[fresh_cursor]
                fresh_cursor += 1
                rep = model.draw(label, rng)
            period_samples.append(Sample(sample_id, label, ts, rep))
        per_period.append(period_samples)
        samples.extend(period_samples)

    return SynthResult(Dataset(samples), tuple(ground_truth), tuple(labels))


def split_periods(ds: Dataset) -> list[tuple[str, Dataset]]:
    """Split a dataset into per-month datasets, in chronological order."""
    groups: dict[tuple[int, int], list[Sample]] = {}
    for s in ds.samples:
        groups.setdefault((s.timestamp.year, s.timestamp.month), []).append(s)
    out = []
    for (year, month), members in sorted(groups.items()):
        out.append((f"{year:04d}-{month:02d}", Dataset(members, ds.schema)))
    return out


@dataclass(frozen=True)
class FlipFixture:
    """Canned train/test split plus two synthetic detector behaviors.

    MEMO is perfect on leaked test samples and weak elsewhere; GEN is
    uniformly moderate. The construction guarantees MEMO wins on the
    complete test set while GEN wins once leakage is removed.
    """

    train: Dataset
    test: Dataset
    memo: PredictionSet
    gen: PredictionSet
    leak_ids: frozenset[str]
    ground_truth: tuple[PlantedDuplicate, ...]


_MEMO_OFFLEAK_ACCURACY = 0.52
_GEN_ACCURACY = 0.80


def flip_fixture(seed: int, leak_rate: float = 0.7) -> FlipFixture:
    """Build the fixture where leakage flips a model comparison.

    Raises :class:`FixtureError` when the flip cannot be realized, in
    particular for ``leak_rate`` too low to matter.
    """
    if leak_rate <= 0.0:
        raise FixtureError("flip fixture is impossible without leakage (leak_rate == 0)")
    cfg = SynthConfig(
        n_periods=4,
        samples_per_period=3000,
        malware_ratio=0.5,
        leak_rate=leak_rate,
        drift_rate=0.15,
        representation=BinarySpec(dim=128, density=0.25),
        duplicate_label_flip=0.0,
        seed=seed,
    )
    result = gen_synthetic(cfg)
    periods = split_periods(result.dataset)
    train = Dataset([s for _, part in periods[:-1] for s in part.samples])
    test = periods[-1][1]
    leak_ids = exact_leak_set(train, test).leak_ids

    rng = np.random.default_rng(np.random.SeedSequence([seed, GENERATOR_VERSION]))

    def behave(sample: Sample, accuracy: float) -> Label:
        if rng.random() < accuracy:
            return sample.label
        return Label.BENIGN if sample.label is Label.MALICIOUS else Label.MALICIOUS

    memo_preds = {}
    gen_preds = {}
    for s in test.samples:
        memo_preds[s.id] = s.label if s.id in leak_ids \
            else behave(s, _MEMO_OFFLEAK_ACCURACY)
        gen_preds[s.id] = behave(s, _GEN_ACCURACY)

    labels = test.labels()
    memo_report = evaluate_partitions(labels, memo_preds, test.ids, leak_ids)
    gen_report = evaluate_partitions(labels, gen_preds, test.ids, leak_ids)
    ba = lambda r: r.ba if r.ba is not None else float("nan")  # noqa: E731
    if not (ba(memo_report.complete) > ba(gen_report.complete)
            and ba(gen_report.nonleak_portion) > ba(memo_report.nonleak_portion)):
        raise FixtureError(
            "flip fixture failed to realize the comparison flip: "
            f"complete BA memo={ba(memo_report.complete):.4f} vs gen={ba(gen_report.complete):.4f}; "
            f"non-leak BA gen={ba(gen_report.nonleak_portion):.4f} vs "
            f"memo={ba(memo_report.nonleak_portion):.4f}")

    return FlipFixture(
        train, test,
        PredictionSet("memo", memo_preds),
        PredictionSet("gen", gen_preds),
        leak_ids, result.ground_truth,
    )
