"""Labeled feature vectors: data model, on-disk formats, synthetic generator.

Binary layout (little-endian): magic ``GSFL``, u16 version=1, u32 dim,
u32 num_classes, u64 num_samples, then per sample ``dim`` float32 values
followed by a u32 1-based label. A plain-text CSV alternative (``dim``
comma-separated decimals then an integer label per line) is auto-detected
by the ``.csv`` extension. Values are stored as float32; all numeric work
elsewhere in the package is done in float64.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FeatureFormatError, ParameterError
from .seeding import stream_rng

MAGIC = b"GSFL"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHIIQ")  # magic, version, dim, num_classes, num_samples

# Byte offsets of the header fields, used in format error messages.
_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_DIM = 6
_OFF_CLASSES = 10
_OFF_COUNT = 14
HEADER_SIZE = _HEADER.size  # 22


@dataclass
class FeatureVector:
    """One sample: a finite real vector plus a 1-based class label."""

    values: np.ndarray
    label: int


@dataclass(eq=False)
class FeatureDataset:
    """An ordered collection of equally sized labeled feature vectors.

    ``values`` is an (N, dim) float32 array, ``labels`` an (N,) int64 array
    with entries in 1..num_classes. A dataset tagged ``train`` must contain
    at least one sample of every class.
    """

    dim: int
    num_classes: int
    values: np.ndarray
    labels: np.ndarray
    split_tag: str = "train"

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError(f"feature dimension must be >= 1, got {self.dim}")
        if self.num_classes < 1:
            raise ParameterError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.split_tag not in ("train", "test"):
            raise ParameterError(f"split_tag must be 'train' or 'test', got {self.split_tag!r}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] != self.dim:
            raise ParameterError(
                f"values must have shape (N, {self.dim}), got {self.values.shape}"
            )
        if self.labels.shape != (self.values.shape[0],):
            raise ParameterError(
                f"labels must have shape ({self.values.shape[0]},), got {self.labels.shape}"
            )
        bad = ~np.isfinite(self.values).all(axis=1)
        if bad.any():
            raise DataError(f"non-finite value in sample {int(np.argmax(bad))}")
        out = (self.labels < 1) | (self.labels > self.num_classes)
        if out.any():
            i = int(np.argmax(out))
            raise DataError(
                f"label {int(self.labels[i])} of sample {i} outside 1..{self.num_classes}"
            )
        if self.split_tag == "train":
            present = np.unique(self.labels)
            missing = sorted(set(range(1, self.num_classes + 1)) - set(present.tolist()))
            if missing:
                raise DataError(f"train split has no samples for classes {missing}")

    def __len__(self) -> int:
        return self.values.shape[0]

    def sample(self, i: int) -> FeatureVector:
        return FeatureVector(self.values[i].copy(), int(self.labels[i]))

    def samples(self):
        return (self.sample(i) for i in range(len(self)))


def load_features(path, split: str = "train") -> FeatureDataset:
    """Read a feature file (binary or ``.csv``) into a dataset."""
    if os.fspath(path).lower().endswith(".csv"):
        return _load_csv(path, split)
    data = open(path, "rb").read()
    if len(data) < HEADER_SIZE:
        raise FeatureFormatError(
            f"{path}: truncated header, file ends at byte offset {len(data)} "
            f"(need {HEADER_SIZE})"
        )
    magic, version, dim, num_classes, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r} at byte offset {_OFF_MAGIC}")
    if version != FORMAT_VERSION:
        raise FeatureFormatError(
            f"{path}: unsupported version {version} at byte offset {_OFF_VERSION}"
        )
    if dim == 0:
        raise FeatureFormatError(f"{path}: zero dimension at byte offset {_OFF_DIM}")
    if num_classes == 0:
        raise FeatureFormatError(f"{path}: zero class count at byte offset {_OFF_CLASSES}")
    record = 4 * dim + 4
    expected = HEADER_SIZE + count * record
    if len(data) < expected:
        raise FeatureFormatError(
            f"{path}: truncated payload at byte offset {len(data)} "
            f"(header declares {count} samples = {expected} bytes)"
        )
    if len(data) > expected:
        raise FeatureFormatError(f"{path}: trailing bytes at byte offset {expected}")
    dtype = np.dtype([("values", "<f4", (dim,)), ("label", "<u4")])
    records = np.frombuffer(data, dtype=dtype, count=count, offset=HEADER_SIZE)
    values = records["values"].reshape(count, dim).copy()
    labels = records["label"].astype(np.int64)
    out = (labels < 1) | (labels > num_classes)
    if out.any():
        i = int(np.argmax(out))
        raise FeatureFormatError(
            f"{path}: label {int(labels[i])} of sample {i} outside 1..{num_classes} "
            f"at byte offset {HEADER_SIZE + i * record + 4 * dim}"
        )
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        raise DataError(f"{path}: non-finite value in sample {int(np.argmax(bad))}")
    return FeatureDataset(dim, num_classes, values, labels, split)


def save_features(dataset: FeatureDataset, path) -> None:
    """Write ``dataset`` to ``path``; binary by default, CSV for ``.csv``."""
    if os.fspath(path).lower().endswith(".csv"):
        _save_csv(dataset, path)
        return
    n = len(dataset)
    dtype = np.dtype([("values", "<f4", (dataset.dim,)), ("label", "<u4")])
    records = np.empty(n, dtype=dtype)
    records["values"] = dataset.values
    records["label"] = dataset.labels.astype(np.uint32)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, dataset.dim, dataset.num_classes, n)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def _load_csv(path, split: str) -> FeatureDataset:
    rows = []
    labels = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise FeatureFormatError(f"{path}: line {lineno}: need values and a label")
            if width is None:
                width = len(parts) - 1
            elif len(parts) - 1 != width:
                raise FeatureFormatError(
                    f"{path}: line {lineno}: expected {width} values, got {len(parts) - 1}"
                )
            try:
                rows.append([float(p) for p in parts[:-1]])
                labels.append(int(parts[-1]))
            except ValueError as exc:
                raise FeatureFormatError(f"{path}: line {lineno}: {exc}") from exc
    if width is None:
        raise FeatureFormatError(f"{path}: empty CSV feature file")
    values = np.asarray(rows, dtype=np.float32)
    label_arr = np.asarray(labels, dtype=np.int64)
    return FeatureDataset(width, int(label_arr.max()), values, label_arr, split)


def _save_csv(dataset: FeatureDataset, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for i in range(len(dataset)):
            # repr of the float64 widening round-trips the float32 exactly
            vals = ",".join(repr(float(v)) for v in dataset.values[i])
            fh.write(f"{vals},{int(dataset.labels[i])}\n")


@dataclass
class SyntheticSpec:
    """Recipe for a desk-scale dataset with planted group/class geometry.

    Classes are dealt round-robin into ``num_groups`` ground-truth groups.
    A sample of class c in group j is drawn as
    ``group_anchor[j] + class_anchor[c] + noise``, with the anchor matrices
    scaled by ``shared_scale`` and ``discriminative_scale`` and isotropic
    Gaussian noise scaled by ``noise_scale``.
    """

    num_classes: int
    num_groups: int
    dim: int
    per_class_count: int
    shared_scale: float = 1.0
    discriminative_scale: float = 1.0
    noise_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_groups > self.num_classes:
            raise ParameterError(
                f"num_groups ({self.num_groups}) must not exceed num_classes ({self.num_classes})"
            )
        if self.num_groups < 1 or self.num_classes < 1 or self.dim < 1:
            raise ParameterError("num_classes, num_groups and dim must be >= 1")
        if self.per_class_count < 1:
            raise ParameterError(f"per_class_count must be >= 1, got {self.per_class_count}")
        for name in ("shared_scale", "discriminative_scale", "noise_scale"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")

    def true_group(self, label: int) -> int:
        """Planted group of class ``label`` (round-robin deal)."""
        return (label - 1) % self.num_groups + 1


def synthetic_anchors(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Group and class anchor matrices for ``spec`` (float64).

    Anchors depend only on ``spec.seed``, not on the split, so train and
    test sets generated from one spec share the same geometry.
    """
    rng = stream_rng(spec.seed, "synthetic-anchors")
    group_anchors = spec.shared_scale * rng.standard_normal((spec.num_groups, spec.dim))
    class_anchors = spec.discriminative_scale * rng.standard_normal(
        (spec.num_classes, spec.dim)
    )
    return group_anchors, class_anchors


def generate_synthetic(spec: SyntheticSpec, split: str = "train") -> FeatureDataset:
    """Deterministically generate a dataset from ``spec``.

    The noise stream is keyed by (seed, split) so a train/test pair shares
    anchors but has independent noise.
    """
    group_anchors, class_anchors = synthetic_anchors(spec)
    rng = stream_rng(spec.seed, f"synthetic-noise-{split}")
    n = spec.num_classes * spec.per_class_count
    values = np.empty((n, spec.dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    row = 0
    for c in range(1, spec.num_classes + 1):
        center = group_anchors[spec.true_group(c) - 1] + class_anchors[c - 1]
        block = np.tile(center, (spec.per_class_count, 1))
        if spec.noise_scale > 0:
            block = block + spec.noise_scale * rng.standard_normal(block.shape)
        values[row : row + spec.per_class_count] = block
        labels[row : row + spec.per_class_count] = c
        row += spec.per_class_count
    return FeatureDataset(spec.dim, spec.num_classes, values.astype(np.float32), labels, split)
