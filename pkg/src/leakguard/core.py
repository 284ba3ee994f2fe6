"""Core dataset model: samples, labels, timestamps, and representations.

A :class:`Dataset` is an immutable, timestamp-ordered collection of
:class:`Sample` objects sharing one representation schema (sparse binary
feature vectors or dense embeddings). Construction validates every
invariant; downstream modules can rely on datasets being well-formed.
"""

from __future__ import annotations

import datetime as _dt
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger("leakguard.core")


class LeakguardError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(LeakguardError):
    """A malformed input file. Carries the path and 1-based line number."""

    def __init__(self, message: str, *, path: Optional[str] = None,
                 line: Optional[int] = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}: " if line is None else f"{path}:{line}: "
        super().__init__(prefix + message)


class SchemaMismatchError(LeakguardError):
    """Two datasets (or a dataset and an operation) disagree on schema."""


class DatasetValidationError(LeakguardError):
    """Dataset construction rejected input that violates an invariant."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"{len(self.violations)} invariant violation(s): {lines}{more}")


class Label(Enum):
    """Binary class label; MALICIOUS is the positive class everywhere."""

    BENIGN = "benign"
    MALICIOUS = "malicious"

    @classmethod
    def parse(cls, text: str) -> "Label":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown label {text!r} (expected 'benign' or 'malicious')")


@dataclass(frozen=True)
class Timestamp:
    """Calendar month or full date; ordered by the earliest instant it covers.

    ``day`` is ``None`` for month granularity. Ordering operators compare the
    period's first day, so "2020-01" sorts with "2020-01-01"; equality still
    distinguishes the two granularities.
    """

    year: int
    month: int
    day: Optional[int] = None

    def __post_init__(self) -> None:
        # datetime.date validates ranges (month 1..12, real day of month)
        _dt.date(self.year, self.month, self.day if self.day is not None else 1)

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        """Parse "YYYY-MM" or an ISO-8601 date "YYYY-MM-DD"."""
        parts = text.split("-")
        try:
            if len(parts) == 2:
                return cls(int(parts[0]), int(parts[1]))
            if len(parts) == 3:
                d = _dt.date.fromisoformat(text)
                return cls(d.year, d.month, d.day)
        except ValueError as exc:
            raise ValueError(f"unparseable timestamp {text!r}: {exc}") from None
        raise ValueError(f"unparseable timestamp {text!r} (expected YYYY-MM or YYYY-MM-DD)")

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (self.year, self.month, self.day if self.day is not None else 1)

    def isoformat(self) -> str:
        if self.day is None:
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"

    def __lt__(self, other: "Timestamp") -> bool:
        return self.sort_key < other.sort_key

    def __le__(self, other: "Timestamp") -> bool:
        return self.sort_key <= other.sort_key

    def __gt__(self, other: "Timestamp") -> bool:
        return self.sort_key > other.sort_key

    def __ge__(self, other: "Timestamp") -> bool:
        return self.sort_key >= other.sort_key

    def __str__(self) -> str:
        return self.isoformat()


@dataclass(frozen=True)
class BinaryFeatureVector:
    """Sparse binary vector: dimension plus the sorted indices set to 1.

    Equality and hashing use (dim, indices); two vectors are the same
    representation iff both match.
    """

    dim: int
    indices: tuple[int, ...]

    kind: ClassVar[str] = "binary"

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def key(self) -> tuple[int, tuple[int, ...]]:
        """Canonical bucket key for exact-duplicate hashing."""
        return (self.dim, self.indices)


class DenseEmbedding:
    """Dense real vector stored as little-endian float32.

    Exact equality is bitwise on the stored float32 payload. Finiteness is
    not enforced here; dataset validation flags NaN/Inf values.
    """

    kind: ClassVar[str] = "embedding"

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype="<f4")
        if arr.ndim != 1:
            raise ValueError(f"embedding must be one-dimensional, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def key(self) -> bytes:
        """Canonical bucket key: the raw little-endian float32 bytes."""
        return self.values.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseEmbedding):
            return NotImplemented
        return self.dim == other.dim and self.key() == other.key()

    def __hash__(self) -> int:
        return hash((self.dim, self.key()))

    def __repr__(self) -> str:
        return f"DenseEmbedding(dim={self.dim})"


Representation = Union[BinaryFeatureVector, DenseEmbedding]


@dataclass(frozen=True)
class Sample:
    """One observation: identity, label, release time, and representation."""

    id: str
    label: Label
    timestamp: Timestamp
    representation: Representation
    family: Optional[str] = None


@dataclass(frozen=True)
class Schema:
    """Representation contract shared by every sample in a dataset."""

    kind: str
    dim: int


@dataclass(frozen=True)
class Violation:
    """A named invariant breach attached to a sample (or the whole dataset)."""

    invariant: str
    sample_id: Optional[str]
    message: str

    def __str__(self) -> str:
        where = f" [{self.sample_id}]" if self.sample_id else ""
        return f"{self.invariant}{where}: {self.message}"


def _representation_violations(sample: Sample) -> list[Violation]:
    rep = sample.representation
    out: list[Violation] = []
    if isinstance(rep, BinaryFeatureVector):
        if rep.dim <= 0:
            out.append(Violation("positive-dim", sample.id, f"dim {rep.dim} is not positive"))
            return out
        if any(b <= a for a, b in zip(rep.indices, rep.indices[1:])):
            out.append(Violation("sorted-indices", sample.id,
                                 "indices are not strictly increasing"))
        if rep.indices and (rep.indices[0] < 0 or rep.indices[-1] >= rep.dim):
            out.append(Violation("index-range", sample.id,
                                 f"indices outside [0, {rep.dim})"))
    else:
        if rep.dim <= 0:
            out.append(Violation("positive-dim", sample.id, "empty embedding"))
        elif not np.all(np.isfinite(rep.values)):
            out.append(Violation("finite-values", sample.id,
                                 "embedding contains NaN or Inf"))
    return out


def validate_samples(samples: Sequence[Sample],
                     schema: Optional[Schema] = None) -> list[Violation]:
    """Check every dataset invariant over ``samples``; return all breaches.

    Violations are data, not exceptions: an empty list means the samples
    (with the optional expected ``schema``) form a valid dataset body.
    """
    violations: list[Violation] = []
    seen: set[str] = set()
    expected = schema
    prev_key = None
    for sample in samples:
        if not sample.id:
            violations.append(Violation("non-empty-id", None, "sample with empty id"))
        if sample.id in seen:
            violations.append(Violation("unique-ids", sample.id,
                                        f"duplicate id {sample.id!r}"))
        seen.add(sample.id)
        violations.extend(_representation_violations(sample))
        kind, dim = sample.representation.kind, sample.representation.dim
        if expected is None:
            expected = Schema(kind, dim)
        elif kind != expected.kind:
            violations.append(Violation("schema-kind", sample.id,
                                        f"representation kind {kind!r} != {expected.kind!r}"))
        elif dim != expected.dim:
            violations.append(Violation("schema-dim", sample.id,
                                        f"schema dim mismatch: {dim} != {expected.dim}"))
        key = (sample.timestamp.sort_key, sample.id)
        if prev_key is not None and key < prev_key:
            violations.append(Violation("temporal-order", sample.id,
                                        "samples not sorted by (timestamp, id)"))
        prev_key = key
    return violations


class Dataset:
    """Immutable, validated, time-ordered sample collection.

    Samples are stored in ascending timestamp order (ties broken by
    lexicographic id) so every downstream operation is deterministic.
    Safe to share across threads; nothing mutates after construction.
    """

    __slots__ = ("_samples", "_schema", "_index")

    def __init__(self, samples: Iterable[Sample],
                 schema: Optional[Schema] = None):
        ordered = tuple(sorted(samples, key=lambda s: (s.timestamp.sort_key, s.id)))
        violations = validate_samples(ordered, schema)
        if violations:
            raise DatasetValidationError(violations)
        if schema is None and ordered:
            rep = ordered[0].representation
            schema = Schema(rep.kind, rep.dim)
        self._samples = ordered
        self._schema = schema
        self._index = {s.id: i for i, s in enumerate(ordered)}

    @property
    def samples(self) -> tuple[Sample, ...]:
        return self._samples

    @property
    def schema(self) -> Optional[Schema]:
        """None only for an empty dataset constructed without an explicit schema."""
        return self._schema

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(self._index)

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._schema == other._schema and self._samples == other._samples

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, schema={self._schema})"

    def by_id(self, sample_id: str) -> Sample:
        try:
            return self._samples[self._index[sample_id]]
        except KeyError:
            raise KeyError(f"unknown sample id {sample_id!r}") from None

    def subset(self, ids: Iterable[str]) -> "Dataset":
        """Dataset restricted to ``ids``, preserving order and schema."""
        wanted = set(ids)
        unknown = wanted - set(self._index)
        if unknown:
            raise KeyError(f"unknown sample ids: {sorted(unknown)[:5]}")
        return Dataset((s for s in self._samples if s.id in wanted), self._schema)

    def label_counts(self) -> tuple[int, int]:
        """(benign, malicious) sample counts."""
        malicious = sum(1 for s in self._samples if s.label is Label.MALICIOUS)
        return len(self._samples) - malicious, malicious

    def malware_ratio(self) -> float:
        if not self._samples:
            return 0.0
        return self.label_counts()[1] / len(self._samples)

    def min_timestamp(self) -> Timestamp:
        if not self._samples:
            raise ValueError("empty dataset has no timestamps")
        return self._samples[0].timestamp

    def max_timestamp(self) -> Timestamp:
        if not self._samples:
            raise ValueError("empty dataset has no timestamps")
        return max(self._samples, key=lambda s: s.timestamp.sort_key).timestamp

    def labels(self) -> dict[str, Label]:
        return {s.id: s.label for s in self._samples}


def validate_dataset(ds: Dataset) -> list[Violation]:
    """Re-run every invariant check on a constructed dataset.

    Always [] for datasets built through the public constructors, which
    enforce the invariants up front.
    """
    return validate_samples(ds.samples, ds.schema)


def require_same_schema(a: Dataset, b: Dataset) -> Schema:
    """Schemas of ``a`` and ``b`` must agree; returns the common schema."""
    sa, sb = a.schema, b.schema
    if sa is None and sb is None:
        raise SchemaMismatchError("both datasets are empty with no declared schema")
    if sa is None:
        return sb  # type: ignore[return-value]
    if sb is None:
        return sa
    if sa != sb:
        raise SchemaMismatchError(f"schema mismatch: {sa} vs {sb}")
    return sa


def require_embedding_schema(*datasets: Dataset) -> Schema:
    """All datasets must share one dense-embedding schema."""
    schema: Optional[Schema] = None
    for ds in datasets:
        if ds.schema is None:
            continue
        if schema is None:
            schema = ds.schema
        elif schema != ds.schema:
            raise SchemaMismatchError(f"schema mismatch: {schema} vs {ds.schema}")
    if schema is None:
        raise SchemaMismatchError("no declared schema on any input dataset")
    if schema.kind != "embedding":
        raise SchemaMismatchError(f"operation requires embeddings, got {schema.kind!r}")
    return schema
