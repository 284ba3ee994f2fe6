"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from leakguard.core import (
    BinaryFeatureVector,
    Dataset,
    DenseEmbedding,
    Label,
    Sample,
    Schema,
    Timestamp,
)

BENIGN = Label.BENIGN
MALICIOUS = Label.MALICIOUS


def bfv(dim: int, *indices: int) -> BinaryFeatureVector:
    return BinaryFeatureVector(dim, tuple(indices))


def emb(*values: float) -> DenseEmbedding:
    return DenseEmbedding(list(values))


def sample(sample_id: str, rep, label: Label = BENIGN, ts: str = "2020-01",
           family: str | None = None) -> Sample:
    return Sample(sample_id, label, Timestamp.parse(ts), rep, family)


def dataset(*samples: Sample, schema: Schema | None = None) -> Dataset:
    return Dataset(samples, schema)


def random_binary_dataset(rng: np.random.Generator, n: int, dim: int = 24,
                          pool: list | None = None, ts: str = "2020-01",
                          prefix: str = "s") -> Dataset:
    """Random binary dataset drawing representations from ``pool`` when given.

    A shared pool between two datasets plants organic exact duplicates.
    """
    samples = []
    for i in range(n):
        if pool is not None and rng.random() < 0.5:
            rep = pool[rng.integers(0, len(pool))]
        else:
            size = int(rng.integers(0, max(dim // 2, 1)))
            idx = sorted(rng.choice(dim, size=size, replace=False).tolist())
            rep = BinaryFeatureVector(dim, tuple(int(j) for j in idx))
        label = MALICIOUS if rng.random() < 0.3 else BENIGN
        samples.append(sample(f"{prefix}{i:05d}", rep, label, ts))
    return Dataset(samples, Schema("binary", dim))


def random_embedding_dataset(rng: np.random.Generator, n: int, dim: int = 8,
                             pool: list | None = None, ts: str = "2020-01",
                             prefix: str = "s") -> Dataset:
    samples = []
    for i in range(n):
        if pool is not None and rng.random() < 0.5:
            rep = pool[rng.integers(0, len(pool))]
        else:
            rep = DenseEmbedding(rng.standard_normal(dim))
        label = MALICIOUS if rng.random() < 0.3 else BENIGN
        samples.append(sample(f"{prefix}{i:05d}", rep, label, ts))
    return Dataset(samples, Schema("embedding", dim))


def representation_pool(rng: np.random.Generator, size: int, dim: int,
                        kind: str) -> list:
    """A small pool of representations so random datasets share duplicates."""
    pool = []
    for _ in range(size):
        if kind == "binary":
            k = int(rng.integers(0, max(dim // 2, 1)))
            idx = sorted(rng.choice(dim, size=k, replace=False).tolist())
            pool.append(BinaryFeatureVector(dim, tuple(int(j) for j in idx)))
        else:
            pool.append(DenseEmbedding(rng.standard_normal(dim)))
    return pool


def orthogonal_unit(rng: np.random.Generator, v: np.ndarray) -> np.ndarray:
    """A random unit vector orthogonal to ``v``."""
    v_hat = v / np.linalg.norm(v)
    while True:
        w = rng.standard_normal(v.shape[0])
        w -= (w @ v_hat) * v_hat
        norm = np.linalg.norm(w)
        if norm > 1e-9:
            return w / norm


def vector_at_cosine(rng: np.random.Generator, v: np.ndarray,
                     target: float) -> np.ndarray:
    """A vector whose cosine similarity with ``v`` is ``target`` (pre-float32)."""
    v_hat = v / np.linalg.norm(v)
    w = orthogonal_unit(rng, v)
    scale = float(rng.uniform(0.5, 2.0))
    return scale * (target * v_hat + np.sqrt(max(1.0 - target * target, 0.0)) * w)


def planted_calibration_data(seed: int = 11, dim: int = 24, n_train: int = 60,
                             n_leak: int = 25, n_miss: int = 6,
                             n_far: int = 30):
    """Embedding train/test pair with a planted leak structure.

    Leak pairs have similarity >= 0.975, near-misses about 0.92, and the
    rest of the test set stays far from every training vector. Returns
    (train, test, planted leak ids).
    """
    rng = np.random.default_rng(seed)
    train_vecs = [rng.standard_normal(dim) * float(rng.uniform(0.5, 2.0))
                  for _ in range(n_train)]
    train = Dataset(
        [sample(f"tr{i:03d}", DenseEmbedding(v), ts="2020-01")
         for i, v in enumerate(train_vecs)],
        Schema("embedding", dim))

    test_samples = []
    leak_ids = set()
    for i in range(n_leak):
        src = train_vecs[int(rng.integers(0, n_train))]
        target = float(rng.uniform(0.975, 0.978))
        sid = f"leak{i:03d}"
        test_samples.append(sample(sid, DenseEmbedding(vector_at_cosine(rng, src, target)),
                                   ts="2020-02"))
        leak_ids.add(sid)
    for i in range(n_miss):
        src = train_vecs[int(rng.integers(0, n_train))]
        target = float(rng.uniform(0.915, 0.925))
        test_samples.append(sample(f"miss{i:03d}",
                                   DenseEmbedding(vector_at_cosine(rng, src, target)),
                                   ts="2020-02"))
    for i in range(n_far):
        test_samples.append(sample(f"far{i:03d}",
                                   DenseEmbedding(rng.standard_normal(dim)),
                                   ts="2020-02"))
    test = Dataset(test_samples, Schema("embedding", dim))
    return train, test, frozenset(leak_ids)
