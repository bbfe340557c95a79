"""Labeled embedding datasets and their on-disk formats (AEF binary, CSV)."""

from __future__ import annotations

import csv
import enum
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    FormatError,
    LabelError,
    ParseError,
    SplitError,
    StorageError,
    TruncationError,
    ValidationError,
)

AEF_MAGIC = b"AEF1"
_HEADER = struct.Struct("<4sIII")


class GenderLabel(enum.IntEnum):
    FEMALE = 0
    MALE = 1

    @classmethod
    def parse(cls, token: str) -> "GenderLabel":
        t = token.strip().lower()
        if t in ("0", "female"):
            return cls.FEMALE
        if t in ("1", "male"):
            return cls.MALE
        raise ValueError(f"not a gender label: {token!r}")


@dataclass(frozen=True)
class EmbeddingRecord:
    features: np.ndarray
    label: GenderLabel


@dataclass(frozen=True, eq=False)
class EmbeddingDataset:
    """An immutable, ordered collection of labeled feature vectors.

    Features are held as a ``(n, dimension)`` float32 array and labels as a
    ``(n,)`` uint8 array using Female=0, Male=1. Arrays are made read-only on
    construction so a dataset can be shared between workers.
    """

    features: np.ndarray
    labels: np.ndarray
    source_tag: str = ""
    dimension: int = field(default=0)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        dim = self.dimension
        if feats.ndim == 1 and feats.size == 0:
            feats = feats.reshape(0, dim)
        if feats.ndim != 2:
            raise ValidationError(f"features must be 2-d, got shape {feats.shape}")
        if dim == 0:
            dim = feats.shape[1]
        if dim <= 0:
            raise ValidationError("dimension must be positive")
        if feats.shape[1] != dim:
            raise ValidationError(
                f"feature width {feats.shape[1]} does not match dimension {dim}"
            )
        if labels.shape[0] != feats.shape[0]:
            raise ValidationError(
                f"{labels.shape[0]} labels for {feats.shape[0]} feature rows"
            )
        if labels.size and labels.max() > 1:
            bad = int(np.argmax(labels > 1))
            raise LabelError(f"label {labels[bad]} at record {bad}", index=bad)
        if feats is self.features:
            feats = feats.copy()
        feats.flags.writeable = False
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dimension", int(dim))

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, i) -> EmbeddingRecord:
        return EmbeddingRecord(self.features[i], GenderLabel(int(self.labels[i])))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDataset):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and np.array_equal(self.labels, other.labels)
            and self.features.tobytes() == other.features.tobytes()
        )

    @classmethod
    def from_records(cls, records, dimension=None, source_tag="") -> "EmbeddingDataset":
        records = list(records)
        if not records:
            if dimension is None:
                raise ValidationError("dimension required for an empty dataset")
            return cls(np.zeros((0, dimension), np.float32), np.zeros(0, np.uint8),
                       source_tag, dimension)
        feats = np.stack([np.asarray(r.features, dtype=np.float32) for r in records])
        labels = np.array([int(r.label) for r in records], dtype=np.uint8)
        return cls(feats, labels, source_tag, dimension or feats.shape[1])

    def subset(self, indices, source_tag=None) -> "EmbeddingDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return EmbeddingDataset(
            self.features[indices],
            self.labels[indices],
            self.source_tag if source_tag is None else source_tag,
            self.dimension,
        )

    def class_counts(self) -> tuple[int, int]:
        n_male = int(self.labels.sum())
        return len(self) - n_male, n_male

    def X(self) -> np.ndarray:
        """Features as a float64 matrix, the precision all learners compute in."""
        return self.features.astype(np.float64)

    def signed_labels(self) -> np.ndarray:
        """Labels mapped Female -> -1, Male -> +1."""
        return self.labels.astype(np.float64) * 2.0 - 1.0


def check_finite(dataset: EmbeddingDataset) -> None:
    bad = ~np.isfinite(dataset.features).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValidationError(f"record {i} has a non-finite component", index=i)


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("label", "u1"), ("features", "<f4", (dim,))])


def aef_bytes(dataset: EmbeddingDataset) -> bytes:
    rec = np.empty(len(dataset), dtype=_record_dtype(dataset.dimension))
    rec["label"] = dataset.labels
    rec["features"] = dataset.features
    return _HEADER.pack(AEF_MAGIC, len(dataset), dataset.dimension, 0) + rec.tobytes()


def save_aef(dataset: EmbeddingDataset, path) -> None:
    check_finite(dataset)
    blob = aef_bytes(dataset)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}", path=path) from exc


def parse_aef(blob: bytes, source_tag: str = "") -> EmbeddingDataset:
    if len(blob) < _HEADER.size:
        raise TruncationError(f"file is {len(blob)} bytes, shorter than the header")
    magic, count, dim, _pad = _HEADER.unpack_from(blob)
    if magic != AEF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {AEF_MAGIC!r}")
    if dim == 0:
        raise FormatError("header declares dimension 0")
    dtype = _record_dtype(dim)
    expected = _HEADER.size + count * dtype.itemsize
    if len(blob) != expected:
        raise TruncationError(
            f"header declares {count} records of dim {dim} ({expected} bytes), "
            f"file has {len(blob)} bytes"
        )
    rec = np.frombuffer(blob, dtype=dtype, count=count, offset=_HEADER.size)
    labels = rec["label"]
    if count and labels.max() > 1:
        i = int(np.argmax(labels > 1))
        raise LabelError(f"label byte {labels[i]} at record {i}", index=i)
    return EmbeddingDataset(rec["features"].copy(), labels.copy(), source_tag, dim)


def load_aef(path) -> EmbeddingDataset:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}", path=path) from exc
    tag = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_aef(blob, source_tag=tag)


def load_csv(path, dimension: int) -> EmbeddingDataset:
    """Read ``label,f1,...,fD`` rows (no header). Labels: 0/1 or female/male."""
    feats, labels = [], []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}", path=path) from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != dimension + 1:
                raise ParseError(
                    f"line {lineno}: expected {dimension + 1} fields, got {len(row)}",
                    line=lineno,
                )
            try:
                labels.append(int(GenderLabel.parse(row[0])))
            except ValueError:
                raise ParseError(f"line {lineno}, column 1: bad label {row[0]!r}",
                                 line=lineno, column=1) from None
            values = np.empty(dimension, dtype=np.float32)
            for col, tok in enumerate(row[1:], start=2):
                try:
                    values[col - 2] = float(tok)
                except ValueError:
                    raise ParseError(f"line {lineno}, column {col}: bad number {tok!r}",
                                     line=lineno, column=col) from None
            feats.append(values)
    arr = np.stack(feats) if feats else np.zeros((0, dimension), np.float32)
    tag = os.path.splitext(os.path.basename(str(path)))[0]
    return EmbeddingDataset(arr, np.array(labels, np.uint8), tag, dimension)


def save_csv(dataset: EmbeddingDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for label, row in zip(dataset.labels, dataset.features):
            # repr of a float32 widened to float64 round-trips exactly
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def l2_normalize(dataset: EmbeddingDataset) -> EmbeddingDataset:
    X = dataset.X()
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0
    if zero.any():
        i = int(np.argmax(zero))
        raise DegenerateInputError(f"record {i} has zero norm", index=i)
    return EmbeddingDataset(X / norms[:, None], dataset.labels, dataset.source_tag,
                            dataset.dimension)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(dataset: EmbeddingDataset, fraction: float, seed: int):
    """Split per class so the first part holds ``round(fraction * n_class)`` records.

    Both parts keep the input's record order.
    """
    if not 0.0 < fraction < 1.0:
        raise SplitError(f"fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    first = []
    for label in (GenderLabel.FEMALE, GenderLabel.MALE):
        idx = np.flatnonzero(dataset.labels == label)
        if idx.size < 2:
            raise SplitError(f"class {label.name} has {idx.size} record(s), need >= 2")
        k = _round_half_up(fraction * idx.size)
        first.append(rng.permutation(idx)[:k])
    mask = np.zeros(len(dataset), dtype=bool)
    mask[np.concatenate(first)] = True
    return (dataset.subset(np.flatnonzero(mask)),
            dataset.subset(np.flatnonzero(~mask)))
