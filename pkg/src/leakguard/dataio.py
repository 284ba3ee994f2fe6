"""Dataset and prediction file formats.

Metadata is JSONL, one object per sample:
    {"id": str, "label": "benign"|"malicious", "timestamp": "YYYY-MM"
     or "YYYY-MM-DD", "family": optional str}

Sparse binary representations are JSONL with a header line:
    {"dim": int}
    {"id": str, "indices": [int, ...]}

Dense embeddings are a binary matrix file: a 16-byte header (magic
"LKGE", u32-LE row count, u32-LE dim, 4 reserved zero bytes) followed by
row-major little-endian float32 values, with a sidecar
``<path>.ids.jsonl`` mapping row index to sample id. A CSV fallback
(``id,v0,...,v{d-1}``) is accepted and written on request.

Predictions are JSONL: {"id": str, "prediction": "benign"|"malicious"}.
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import (
    BinaryFeatureVector,
    DataFormatError,
    Dataset,
    DatasetValidationError,
    DenseEmbedding,
    Label,
    Representation,
    Sample,
    Timestamp,
)

logger = logging.getLogger("leakguard.dataio")

MAGIC = b"LKGE"
_HEADER = struct.Struct("<4sII4x")  # magic, rows, dim, reserved

PathLike = Union[str, Path]


def _iter_jsonl(path: Path):
    """Yield (line_number, parsed object) for every non-blank line."""
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                yield lineno, json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}",
                                      path=str(path), line=lineno) from None


def _load_metadata(path: Path) -> list[tuple[int, str, Label, Timestamp, Optional[str]]]:
    rows = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        if not isinstance(obj, dict):
            raise DataFormatError("metadata row is not an object",
                                  path=str(path), line=lineno)
        sample_id = obj.get("id")
        if not isinstance(sample_id, str) or not sample_id:
            raise DataFormatError("missing or empty 'id'", path=str(path), line=lineno)
        if sample_id in seen:
            raise DataFormatError(
                f"duplicate id {sample_id!r} at line {lineno} (first seen at line {seen[sample_id]})",
                path=str(path), line=lineno)
        seen[sample_id] = lineno
        try:
            label = Label.parse(obj.get("label"))
        except (ValueError, TypeError) as exc:
            raise DataFormatError(str(exc), path=str(path), line=lineno) from None
        ts_raw = obj.get("timestamp")
        if not isinstance(ts_raw, str):
            raise DataFormatError("missing 'timestamp'", path=str(path), line=lineno)
        try:
            ts = Timestamp.parse(ts_raw)
        except ValueError as exc:
            raise DataFormatError(str(exc), path=str(path), line=lineno) from None
        family = obj.get("family")
        if family is not None and not isinstance(family, str):
            raise DataFormatError("'family' must be a string", path=str(path), line=lineno)
        rows.append((lineno, sample_id, label, ts, family))
    return rows


def _load_sparse(path: Path) -> dict[str, BinaryFeatureVector]:
    reps: dict[str, BinaryFeatureVector] = {}
    dim: Optional[int] = None
    for lineno, obj in _iter_jsonl(path):
        if dim is None:
            if not isinstance(obj, dict) or "dim" not in obj:
                raise DataFormatError("first line must be the header {\"dim\": int}",
                                      path=str(path), line=lineno)
            dim = obj["dim"]
            if not isinstance(dim, int) or dim <= 0:
                raise DataFormatError(f"'dim' must be a positive integer, got {dim!r}",
                                      path=str(path), line=lineno)
            continue
        sample_id = obj.get("id")
        if not isinstance(sample_id, str) or not sample_id:
            raise DataFormatError("missing or empty 'id'", path=str(path), line=lineno)
        if sample_id in reps:
            raise DataFormatError(f"duplicate id {sample_id!r} at line {lineno}",
                                  path=str(path), line=lineno)
        indices = obj.get("indices")
        if not isinstance(indices, list) or not all(isinstance(i, int) for i in indices):
            raise DataFormatError("'indices' must be a list of integers",
                                  path=str(path), line=lineno)
        if indices and (min(indices) < 0 or max(indices) >= dim):
            raise DataFormatError(
                f"index out of range for dim {dim}: {indices!r}",
                path=str(path), line=lineno)
        # canonicalize: sorted unique indices
        reps[sample_id] = BinaryFeatureVector(dim, tuple(sorted(set(indices))))
    if dim is None:
        raise DataFormatError("empty sparse representation file (no header)", path=str(path))
    return reps


def _load_embedding_matrix(path: Path) -> dict[str, DenseEmbedding]:
    with path.open("rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataFormatError("truncated header", path=str(path))
        magic, rows, dim = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataFormatError(f"bad magic {magic!r}", path=str(path))
        if dim <= 0:
            raise DataFormatError(f"non-positive dim {dim}", path=str(path))
        data = np.fromfile(fh, dtype="<f4", count=rows * dim)
    if data.size != rows * dim:
        raise DataFormatError(
            f"expected {rows * dim} float32 values, found {data.size}", path=str(path))
    matrix = data.reshape(rows, dim)

    sidecar = Path(str(path) + ".ids.jsonl")
    if not sidecar.exists():
        raise DataFormatError(f"missing row-id sidecar {sidecar}", path=str(path))
    row_ids: dict[int, str] = {}
    for lineno, obj in _iter_jsonl(sidecar):
        row = obj.get("row")
        sample_id = obj.get("id")
        if not isinstance(row, int) or not isinstance(sample_id, str) or not sample_id:
            raise DataFormatError("sidecar rows must be {\"row\": int, \"id\": str}",
                                  path=str(sidecar), line=lineno)
        if row in row_ids:
            raise DataFormatError(f"duplicate row index {row}", path=str(sidecar), line=lineno)
        if not 0 <= row < rows:
            raise DataFormatError(f"row index {row} out of range [0, {rows})",
                                  path=str(sidecar), line=lineno)
        row_ids[row] = sample_id
    if len(row_ids) != rows:
        raise DataFormatError(
            f"sidecar maps {len(row_ids)} of {rows} rows", path=str(sidecar))
    reps: dict[str, DenseEmbedding] = {}
    for row, sample_id in row_ids.items():
        if sample_id in reps:
            raise DataFormatError(f"duplicate id {sample_id!r} in sidecar",
                                  path=str(sidecar))
        reps[sample_id] = DenseEmbedding(matrix[row])
    return reps


def _load_embedding_csv(path: Path) -> dict[str, DenseEmbedding]:
    reps: dict[str, DenseEmbedding] = {}
    dim: Optional[int] = None
    try:
        reps, dim = _read_embedding_csv_rows(path)
    except (csv.Error, UnicodeDecodeError) as exc:
        raise DataFormatError(f"not a readable embedding CSV: {exc}",
                              path=str(path)) from None
    if dim is None:
        raise DataFormatError("empty embedding CSV", path=str(path))
    return reps


def _read_embedding_csv_rows(path: Path):
    reps: dict[str, DenseEmbedding] = {}
    dim: Optional[int] = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and row[0] == "id":
                continue  # optional header
            sample_id, values = row[0], row[1:]
            if not sample_id:
                raise DataFormatError("empty id", path=str(path), line=lineno)
            if sample_id in reps:
                raise DataFormatError(f"duplicate id {sample_id!r} at line {lineno}",
                                      path=str(path), line=lineno)
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise DataFormatError("row has no values", path=str(path), line=lineno)
            elif len(values) != dim:
                raise DataFormatError(
                    f"schema dim mismatch: row has {len(values)} values, expected {dim}",
                    path=str(path), line=lineno)
            try:
                reps[sample_id] = DenseEmbedding([float(v) for v in values])
            except ValueError:
                raise DataFormatError("non-numeric embedding value",
                                      path=str(path), line=lineno) from None
    return reps, dim


def _sniff_and_load_representations(path: Path) -> dict[str, Representation]:
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return _load_embedding_matrix(path)
    stripped = head.lstrip()
    if stripped.startswith(b"{"):
        return _load_sparse(path)
    return _load_embedding_csv(path)


def load_dataset(metadata_path: PathLike, representation_path: PathLike) -> Dataset:
    """Join a metadata file with its representation file into a Dataset.

    The representation format is sniffed: "LKGE" magic selects the binary
    embedding matrix, a JSON object the sparse JSONL format, anything else
    the embedding CSV fallback. Every metadata row must have a
    representation record with the same id; extra representation records
    are ignored (one matrix may serve several metadata subsets).
    """
    meta_path, rep_path = Path(metadata_path), Path(representation_path)
    rows = _load_metadata(meta_path)
    reps = _sniff_and_load_representations(rep_path)
    samples = []
    for lineno, sample_id, label, ts, family in rows:
        rep = reps.get(sample_id)
        if rep is None:
            raise DataFormatError(f"missing representation for id {sample_id!r}",
                                  path=str(meta_path), line=lineno)
        samples.append(Sample(sample_id, label, ts, rep, family))
    try:
        return Dataset(samples)
    except DatasetValidationError as exc:
        # line-level checks above catch most problems; whatever remains
        # (mixed dims across rows, NaN embeddings) surfaces here
        raise DataFormatError(f"invalid dataset: {exc}", path=str(meta_path)) from exc


def save_dataset(ds: Dataset, metadata_path: PathLike, representation_path: PathLike,
                 *, embedding_format: str = "binary") -> None:
    """Write ``ds`` back out in the standard formats (round-trips exactly)."""
    meta_path, rep_path = Path(metadata_path), Path(representation_path)
    with meta_path.open("w", encoding="utf-8") as fh:
        for s in ds.samples:
            obj: dict = {"id": s.id, "label": s.label.value,
                         "timestamp": s.timestamp.isoformat()}
            if s.family is not None:
                obj["family"] = s.family
            fh.write(json.dumps(obj) + "\n")

    schema = ds.schema
    if schema is None or schema.kind == "binary":
        dim = schema.dim if schema is not None else 0
        with rep_path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"dim": dim}) + "\n")
            for s in ds.samples:
                fh.write(json.dumps({"id": s.id, "indices": list(s.representation.indices)}) + "\n")
        return

    if embedding_format == "csv":
        with rep_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            for s in ds.samples:
                writer.writerow([s.id] + [repr(float(v)) for v in s.representation.values])
        return
    if embedding_format != "binary":
        raise ValueError(f"unknown embedding format {embedding_format!r}")

    matrix = np.stack([s.representation.values for s in ds.samples]) if len(ds) \
        else np.zeros((0, schema.dim), dtype="<f4")
    with rep_path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, len(ds), schema.dim))
        fh.write(matrix.astype("<f4").tobytes())
    with Path(str(rep_path) + ".ids.jsonl").open("w", encoding="utf-8") as fh:
        for row, s in enumerate(ds.samples):
            fh.write(json.dumps({"row": row, "id": s.id}) + "\n")


def load_predictions(path: PathLike) -> dict[str, Label]:
    """Read a predictions JSONL file into an id -> Label map."""
    out: dict[str, Label] = {}
    p = Path(path)
    for lineno, obj in _iter_jsonl(p):
        sample_id = obj.get("id")
        if not isinstance(sample_id, str) or not sample_id:
            raise DataFormatError("missing or empty 'id'", path=str(p), line=lineno)
        if sample_id in out:
            raise DataFormatError(f"duplicate id {sample_id!r} at line {lineno}",
                                  path=str(p), line=lineno)
        try:
            out[sample_id] = Label.parse(obj.get("prediction"))
        except (ValueError, TypeError) as exc:
            raise DataFormatError(str(exc), path=str(p), line=lineno) from None
    return out


def save_predictions(predictions: dict[str, Label], path: PathLike) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample_id, label in predictions.items():
            fh.write(json.dumps({"id": sample_id, "prediction": label.value}) + "\n")
