"""Synthetic multi-class datasets and header-less CSV ingestion.

Synthetic data places class centers uniformly on a sphere and adds isotropic
Gaussian noise. The train/test split is a fixed per-class round-robin: within
each class, every fifth sample (occurrence order) goes to the test side, so
the split is exactly 80/20 when samples_per_class is a multiple of five and
is reproduced identically when a saved CSV is loaded back.

CSV rows are ``label,f1,...,fD`` with no header; floats are written with
full round-trip precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    dim: int
    samples_per_class: int
    class_center_scale: float
    noise_std: float
    seed: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        for name in ("dim", "samples_per_class"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.class_center_scale <= 0:
            raise ParameterError("class_center_scale must be positive")
        if self.noise_std <= 0:
            raise ParameterError("noise_std must be positive")


@dataclass
class Dataset:
    features: np.ndarray  # [N, D] float64
    labels: np.ndarray    # [N] int64
    num_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DataError(
                f"features {self.features.shape} vs labels {self.labels.shape}"
            )
        if len(self.features) < 1:
            raise DataError("dataset is empty")
        if not np.isfinite(self.features).all():
            raise DataError("features contain non-finite values")
        if (self.labels < 0).any() or (self.labels >= self.num_classes).any():
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "test": self.test_idx}.get(name)
        if idx is None:
            raise ParameterError(f"unknown split {name!r}")
        return self.features[idx], self.labels[idx]


def _round_robin_split(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Every fifth occurrence of each class (0-based: k % 5 == 4) is test."""
    seen: dict[int, int] = {}
    is_test = np.zeros(len(labels), dtype=bool)
    for i, lab in enumerate(labels):
        k = seen.get(int(lab), 0)
        seen[int(lab)] = k + 1
        is_test[i] = (k % 5) == 4
    return np.nonzero(~is_test)[0], np.nonzero(is_test)[0]


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(size=(spec.num_classes, spec.dim))
    norms = np.linalg.norm(centers, axis=1)
    while (norms < 1e-12).any():  # essentially unreachable; keeps the math safe
        bad = norms < 1e-12
        centers[bad] = rng.normal(size=(int(bad.sum()), spec.dim))
        norms = np.linalg.norm(centers, axis=1)
    centers = centers / norms[:, None] * spec.class_center_scale

    n = spec.num_classes * spec.samples_per_class
    features = (
        np.repeat(centers, spec.samples_per_class, axis=0)
        + rng.normal(0.0, spec.noise_std, size=(n, spec.dim))
    )
    labels = np.repeat(np.arange(spec.num_classes, dtype=np.int64),
                       spec.samples_per_class)
    train_idx, test_idx = _round_robin_split(labels)
    return Dataset(features, labels, spec.num_classes, train_idx, test_idx)


def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(ds.labels, ds.features):
            fh.write(str(int(label)))
            for v in row:
                fh.write("," + repr(float(v)))
            fh.write("\n")


def load_csv_dataset(path, num_classes: int) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    features: list[list[float]] = []
    labels: list[int] = []
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise DataError(f"line {lineno}: need a label and >= 1 feature")
            if len(parts) != dim + 1:
                raise DataError(
                    f"line {lineno}: expected {dim + 1} fields, got {len(parts)}"
                )
            try:
                label = int(parts[0])
            except ValueError:
                raise DataError(f"line {lineno}: label {parts[0]!r} is not an integer")
            if not 0 <= label < num_classes:
                raise DataError(
                    f"line {lineno}: label {label} out of range [0, {num_classes})"
                )
            try:
                features.append([float(v) for v in parts[1:]])
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric feature value")
            labels.append(label)
    if not labels:
        raise DataError(f"{path} contains no rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    train_idx, test_idx = _round_robin_split(labels_arr)
    return Dataset(np.asarray(features), labels_arr, num_classes, train_idx, test_idx)


def batch_iter(ds: Dataset, batch_size: int, epoch_seed: int, split: str = "train"):
    """Shuffled minibatches covering the split exactly once; last batch may be short."""
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    idx = {"train": ds.train_idx, "test": ds.test_idx}[split]
    order = np.random.default_rng(epoch_seed).permutation(idx)
    for s in range(0, len(order), batch_size):
        chunk = order[s:s + batch_size]
        yield ds.features[chunk], ds.labels[chunk]
