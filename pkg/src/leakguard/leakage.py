"""Exact and near-duplicate train/test leakage detection.

Exact detection buckets canonical representation keys and confirms
candidates by full equality, so it matches brute-force pairwise
comparison while running in expected linear time. Near detection is
exact brute force over all (test, train) embedding pairs: vectors are
unit-normalized in 64-bit arithmetic and compared by dot product, and a
test sample leaks when its best similarity reaches the threshold under
exact ``>=``.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    Dataset,
    DenseEmbedding,
    Label,
    LeakguardError,
    require_embedding_schema,
    require_same_schema,
)

logger = logging.getLogger("leakguard.leakage")

# near-leak similarity matrices are computed in fixed row blocks so the
# result is bit-identical for any worker count
_BLOCK_ROWS = 256


@dataclass(frozen=True)
class LeakMatch:
    """One leaked test sample and every training sample it matches."""

    test_id: str
    train_ids: tuple[str, ...]
    kind: str  # "exact" | "near"
    best_similarity: float

    def __post_init__(self) -> None:
        if not self.train_ids:
            raise ValueError("a leak match needs at least one training id")

    def to_json_dict(self) -> dict:
        return {"test_id": self.test_id, "train_ids": list(self.train_ids),
                "best_similarity": self.best_similarity}


@dataclass(frozen=True)
class LeakageReport:
    """All leak matches for one test set plus the aggregate ratio."""

    kind: str  # "exact" | "near" | "union"
    threshold: Optional[float]
    test_size: int
    matches: tuple[LeakMatch, ...]

    @cached_property
    def leak_ids(self) -> frozenset[str]:
        return frozenset(m.test_id for m in self.matches)

    @property
    def ratio(self) -> float:
        if self.test_size == 0:
            return 0.0
        return len(self.leak_ids) / self.test_size

    def matched_train_ids(self, test_id: str) -> tuple[str, ...]:
        for m in self.matches:
            if m.test_id == test_id:
                return m.train_ids
        return ()

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "threshold": self.threshold,
            "test_size": self.test_size,
            "ratio": self.ratio,
            "matches": [m.to_json_dict() for m in self.matches],
        }


def exact_leak_set(train: Dataset, test: Dataset) -> LeakageReport:
    """Test samples whose representation equals some training sample's.

    Equality is (dim, indices) for binary vectors and bitwise float32
    payload equality for embeddings. Bucketing by canonical key plus
    full key comparison inside buckets gives the same answer as pairwise
    brute force.
    """
    if train.schema is not None and test.schema is not None:
        require_same_schema(train, test)
    buckets: dict = {}
    for s in train.samples:
        buckets.setdefault(s.representation.key(), []).append(s.id)
    matches = []
    for s in test.samples:
        hit = buckets.get(s.representation.key())
        if hit:
            matches.append(LeakMatch(s.id, tuple(hit), "exact", 1.0))
    return LeakageReport("exact", None, len(test), tuple(matches))


def cosine_similarity(a: DenseEmbedding, b: DenseEmbedding) -> float:
    """Dot product of the unit-normalized vectors, in 64-bit arithmetic.

    A zero-norm input has no direction; the similarity is reported as 0.0
    with a warning. Bitwise-identical inputs return exactly 1.0.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")
    va = a.values.astype(np.float64)
    vb = b.values.astype(np.float64)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        logger.warning("cosine similarity of a zero-norm vector treated as 0.0")
        return 0.0
    if a.key() == b.key():
        return 1.0
    return float(np.dot(va / na, vb / nb))


def _unit_rows(ds: Dataset) -> np.ndarray:
    """Float64 matrix of unit-normalized embeddings; zero rows stay zero."""
    if len(ds) == 0:
        dim = ds.schema.dim if ds.schema is not None else 0
        return np.zeros((0, dim), dtype=np.float64)
    matrix = np.stack([s.representation.values for s in ds.samples]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    zero = norms == 0.0
    if np.any(zero):
        logger.warning("%d zero-norm embeddings; their similarities are 0.0",
                       int(np.sum(zero)))
        norms[zero] = 1.0
    return matrix / norms[:, None]


def _similarity_blocks(test_unit: np.ndarray, train_unit: np.ndarray,
                       workers: int = 1) -> Iterable[tuple[int, np.ndarray]]:
    """Yield (row offset, block similarity matrix) in ascending row order.

    Blocks have a fixed size independent of ``workers``, so results do
    not depend on the degree of parallelism.
    """
    starts = list(range(0, test_unit.shape[0], _BLOCK_ROWS))

    def compute(start: int) -> np.ndarray:
        return test_unit[start:start + _BLOCK_ROWS] @ train_unit.T

    if workers <= 1 or len(starts) <= 1:
        for start in starts:
            yield start, compute(start)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start, block in zip(starts, pool.map(compute, starts)):
            yield start, block


def _pair_similarities(train: Dataset, test: Dataset,
                       workers: int = 1) -> Iterable[tuple[int, np.ndarray]]:
    """Similarity blocks with bitwise-identical pairs snapped to exactly 1.0.

    Normalize-then-dot can round the self-similarity of an identical pair
    to just under 1.0; snapping keeps exact duplicates detectable at any
    threshold up to and including 1.0.
    """
    train_unit = _unit_rows(train)
    test_unit = _unit_rows(test)
    exact_cols: dict = {}
    for j, s in enumerate(train.samples):
        exact_cols.setdefault(s.representation.key(), []).append(j)
    for start, block in _similarity_blocks(test_unit, train_unit, workers):
        for local, s in enumerate(test.samples[start:start + block.shape[0]]):
            cols = exact_cols.get(s.representation.key())
            if cols:
                block[local, cols] = 1.0
        yield start, block


def near_leak_set(train: Dataset, test: Dataset, m: float,
                  *, workers: int = 1) -> LeakageReport:
    """Test samples with cosine similarity >= ``m`` to some training sample.

    Matches record every training id at or above the threshold and the
    best similarity over the whole training set.
    """
    if not 0.0 < m <= 1.0:
        raise ValueError(f"threshold m must be in (0, 1], got {m}")
    require_embedding_schema(train, test)
    train_ids = [s.id for s in train.samples]
    matches = []
    for start, block in _pair_similarities(train, test, workers):
        hit_rows, hit_cols = np.nonzero(block >= m)
        if hit_rows.size == 0:
            continue
        best = block.max(axis=1)
        boundaries = np.searchsorted(hit_rows, np.arange(block.shape[0] + 1))
        for row in np.unique(hit_rows):
            cols = hit_cols[boundaries[row]:boundaries[row + 1]]
            matches.append(LeakMatch(
                test.samples[start + row].id,
                tuple(train_ids[c] for c in cols),
                "near",
                float(best[row]),
            ))
    return LeakageReport("near", m, len(test), tuple(matches))


def leak_report(train: Dataset, test: Dataset, mode: str,
                threshold: Optional[float] = None, *, workers: int = 1) -> LeakageReport:
    """Dispatch to exact, near, or exact-union-near detection."""
    if mode == "exact":
        return exact_leak_set(train, test)
    if mode == "near":
        if threshold is None:
            raise ValueError("near mode needs a similarity threshold")
        return near_leak_set(train, test, threshold, workers=workers)
    if mode == "union":
        if threshold is None:
            raise ValueError("union mode needs a similarity threshold")
        return union_leak([exact_leak_set(train, test),
                           near_leak_set(train, test, threshold, workers=workers)],
                          len(test))
    raise ValueError(f"unknown leak mode {mode!r} (expected exact, near, or union)")


def union_leak(reports: Sequence[LeakageReport], test_size: int) -> LeakageReport:
    """Union of leak sets from several reports over the same test set."""
    for r in reports:
        if r.test_size != test_size:
            raise ValueError(
                f"inconsistent test_size: report has {r.test_size}, expected {test_size}")
    merged: dict[str, tuple[list[str], float]] = {}
    for r in reports:
        for m in r.matches:
            ids, best = merged.setdefault(m.test_id, ([], float("-inf")))
            for train_id in m.train_ids:
                if train_id not in ids:
                    ids.append(train_id)
            merged[m.test_id] = (ids, max(best, m.best_similarity))
    thresholds = {r.threshold for r in reports if r.threshold is not None}
    matches = tuple(
        LeakMatch(test_id, tuple(ids), "near" if best < 1.0 else "exact", best)
        for test_id, (ids, best) in sorted(merged.items())
    )
    return LeakageReport("union", thresholds.pop() if len(thresholds) == 1 else None,
                         test_size, matches)


def iou(a: Iterable[str], b: Iterable[str]) -> float:
    """Intersection over union of two id sets; 1.0 when both are empty."""
    sa, sb = frozenset(a), frozenset(b)
    union = sa | sb
    if not union:
        logger.info("IoU of two empty sets defined as 1.0")
        return 1.0
    return len(sa & sb) / len(union)


@dataclass(frozen=True)
class ThresholdCalibration:
    """IoU curve over a threshold grid and the chosen maximizer."""

    grid: tuple[float, ...]
    iou_curve: tuple[tuple[float, float], ...]
    chosen_m: float
    max_iou: float

    def to_json_dict(self) -> dict:
        return {
            "chosen_m": self.chosen_m,
            "max_iou": self.max_iou,
            "curve": [{"m": m, "iou": v} for m, v in self.iou_curve],
        }


def threshold_grid(range_lo: float, range_hi: float, step: float) -> tuple[float, ...]:
    """Inclusive grid from ``range_lo`` by ``step``.

    Points are computed as lo + k*step (no accumulated drift); the grid
    ends at the index point nearest range_hi, which is included when it
    lands within step/2.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if not range_lo < range_hi:
        raise ValueError(f"empty range [{range_lo}, {range_hi}]")
    last = int(round((range_hi - range_lo) / step))
    grid = tuple(range_lo + k * step for k in range(last + 1))
    if not grid:
        raise ValueError("empty threshold grid")
    return grid


def calibrate_threshold(leak_fv: Iterable[str], train: Dataset, test: Dataset,
                        range_lo: float = 0.8, range_hi: float = 1.0,
                        step: float = 0.01, *, workers: int = 1) -> ThresholdCalibration:
    """Scan thresholds and keep the one whose embedding leak set best
    matches ``leak_fv`` by IoU.

    Nearest-neighbor similarities are computed once and reused across the
    grid; the result is identical to recomputing the leak set per grid
    point. Ties on IoU resolve to the largest threshold (the most
    conservative leak set).
    """
    reference = frozenset(leak_fv)
    require_embedding_schema(train, test)
    grid = threshold_grid(range_lo, range_hi, step)
    if grid[-1] > 1.0:
        # index arithmetic may land the last point a few ulp past 1.0
        if grid[-1] < 1.0 + 1e-9:
            grid = grid[:-1] + (1.0,)
        else:
            raise ValueError(f"threshold grid [{grid[0]}, {grid[-1]}] not within (0, 1]")
    if grid[0] <= 0.0:
        raise ValueError(f"threshold grid [{grid[0]}, {grid[-1]}] not within (0, 1]")

    best = np.full(len(test), -np.inf)
    for start, block in _pair_similarities(train, test, workers):
        if block.shape[1]:
            best[start:start + block.shape[0]] = block.max(axis=1)
    test_ids = [s.id for s in test.samples]

    curve = []
    chosen_m = grid[0]
    max_iou = -1.0
    for m in grid:
        leak_emb = frozenset(tid for tid, b in zip(test_ids, best) if b >= m)
        score = iou(reference, leak_emb)
        curve.append((m, score))
        if score >= max_iou:  # >= so ties resolve to the largest threshold
            max_iou = score
            chosen_m = m
    return ThresholdCalibration(grid, tuple(curve), chosen_m, max_iou)


@dataclass(frozen=True)
class DuplicateGroup:
    """Samples sharing one representation (exactly or transitively near)."""

    key: str
    member_ids: tuple[str, ...]
    benign: int
    malicious: int

    @property
    def label_conflict(self) -> bool:
        return self.benign > 0 and self.malicious > 0

    def to_json_dict(self) -> dict:
        return {"key": self.key, "members": list(self.member_ids),
                "benign": self.benign, "malicious": self.malicious,
                "label_conflict": self.label_conflict}


def _group_key(sample) -> str:
    rep = sample.representation
    payload = repr(rep.key()).encode() if rep.kind == "binary" else rep.key()
    return hashlib.sha256(payload).hexdigest()[:16]


def duplicate_groups(ds: Dataset, m: Optional[float] = None) -> list[DuplicateGroup]:
    """Groups of size >= 2 sharing a representation within one dataset.

    Binary datasets group by exact equality (``m`` must be None);
    embedding datasets group by connected components of the pairwise
    similarity graph at threshold ``m``. Per-group label counts expose
    benign/malicious conflicts.
    """
    if ds.schema is not None and ds.schema.kind == "binary":
        if m is not None:
            raise ValueError("binary datasets group by exact equality; omit m")
        buckets: dict = {}
        for s in ds.samples:
            buckets.setdefault(s.representation.key(), []).append(s)
        components = [members for members in buckets.values() if len(members) >= 2]
    else:
        if m is None:
            raise ValueError("embedding datasets need a similarity threshold m")
        if not 0.0 < m <= 1.0:
            raise ValueError(f"threshold m must be in (0, 1], got {m}")
        parent = list(range(len(ds)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for start, block in _pair_similarities(ds, ds, 1):
            rows, cols = np.nonzero(block >= m)
            for r, c in zip(rows.tolist(), cols.tolist()):
                i, j = start + r, c
                if i < j:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
        by_root: dict[int, list] = {}
        for i, s in enumerate(ds.samples):
            by_root.setdefault(find(i), []).append(s)
        components = [members for members in by_root.values() if len(members) >= 2]

    groups = []
    for members in components:
        malicious = sum(1 for s in members if s.label is Label.MALICIOUS)
        groups.append(DuplicateGroup(
            _group_key(members[0]),
            tuple(s.id for s in members),
            len(members) - malicious,
            malicious,
        ))
    return groups


def leakage_decay(train: Dataset, tests: Sequence[Dataset]) -> list[tuple[int, float]]:
    """Exact-leak ratio of each test set against a fixed training set."""
    previous = None
    for t in tests:
        if len(t) == 0:
            continue
        start = t.min_timestamp()
        if previous is not None and start.sort_key < previous:
            raise ValueError("test sets must be ordered by time")
        previous = start.sort_key
    return [(i, exact_leak_set(train, t).ratio) for i, t in enumerate(tests)]
