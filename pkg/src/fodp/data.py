"""Synthetic Gaussian-blob data and a CIFAR-10 binary reader."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, Rng

CIFAR_RECORD_BYTES = 1 + 3 * 32 * 32
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


class CifarFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (n, d) with one label per row")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def example(self, i: int) -> Example:
        return Example(self.features[i], int(self.labels[i]))

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class DatasetSpec:
    """Where training data comes from.

    For ``source="synthetic"`` the class centres are ``separation * e_k`` (the
    vertices of a scaled simplex in the first ``num_classes`` coordinates) and
    every point adds isotropic noise of scale ``cluster_std``. ``data_seed``
    fixes the split, independently of the training seeds.
    """

    source: str = "synthetic"
    num_classes: int = 10
    dim: int = 64
    per_class_count: int = 500
    test_per_class_count: int = 200
    cluster_std: float = 1.0
    separation: float = 3.0
    data_seed: int = 0
    path: str = ""
    train_count: int = 5000
    test_count: int = 2000
    normalization: str = "standardize"

    def __post_init__(self) -> None:
        if self.source not in ("synthetic", "cifar10_binary"):
            raise ConfigError(f"unknown dataset source {self.source!r}")
        if self.normalization not in ("standardize", "minmax"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.source == "synthetic":
            if self.num_classes < 2 or self.dim < self.num_classes:
                raise ConfigError("synthetic data needs num_classes >= 2 and dim >= num_classes")
            if self.per_class_count <= 0 or self.test_per_class_count <= 0:
                raise ConfigError("per-class counts must be > 0")
            if self.cluster_std < 0:
                raise ConfigError("cluster_std must be >= 0")
        else:
            if self.train_count <= 0 or self.test_count <= 0:
                raise ConfigError("train_count and test_count must be > 0")
            if not self.path:
                raise ConfigError("cifar10_binary source needs a path")


def build_dataset(spec: DatasetSpec) -> tuple[Dataset, Dataset]:
    if spec.source == "synthetic":
        return generate_synthetic(spec, Rng(spec.data_seed).stream("data"))
    return load_cifar10_binary(spec.path, spec.train_count, spec.test_count, spec.normalization)


def generate_synthetic(spec: DatasetSpec, stream: np.random.Generator) -> tuple[Dataset, Dataset]:
    c, d = spec.num_classes, spec.dim
    n_tr, n_te = spec.per_class_count, spec.test_per_class_count
    centres = np.zeros((c, d))
    centres[np.arange(c), np.arange(c)] = spec.separation

    x_tr, y_tr, x_te, y_te = [], [], [], []
    for k in range(c):
        pts = centres[k] + spec.cluster_std * stream.standard_normal((n_tr + n_te, d))
        x_tr.append(pts[:n_tr])
        x_te.append(pts[n_tr:])
        y_tr.append(np.full(n_tr, k))
        y_te.append(np.full(n_te, k))
    train_x, test_x = np.concatenate(x_tr), np.concatenate(x_te)
    train_x, test_x = _normalise(train_x, test_x, spec.normalization, groups=None)
    return (
        Dataset(train_x, np.concatenate(y_tr), c),
        Dataset(test_x, np.concatenate(y_te), c),
    )


def _normalise(train: np.ndarray, test: np.ndarray, how: str, groups: int | None):
    """Fit statistics on ``train`` and apply them to both splits.

    ``groups`` splits the feature axis into equal contiguous channel blocks
    sharing one statistic each (3 for CIFAR); ``None`` means per feature.
    """
    n, d = train.shape

    def stats(a: np.ndarray, fn) -> np.ndarray:
        if groups is None:
            return fn(a, axis=0)
        per = fn(a.reshape(len(a), groups, -1), axis=(0, 2))
        return np.repeat(per, d // groups)

    if how == "standardize":
        mu = stats(train, np.mean)
        sd = stats(train, np.std)
        sd = np.where(sd > 1e-12, sd, 1.0)
        return (train - mu) / sd, (test - mu) / sd
    lo, hi = stats(train, np.min), stats(train, np.max)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    return (train - lo) / span, (test - lo) / span


def read_cifar10_records(path: str | os.PathLike, limit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(pixels uint8 (n, 3072), labels uint8 (n,))`` from one binary batch file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"CIFAR-10 batch file not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD_BYTES:
        raise CifarFormatError(
            f"{path}: {raw.size} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records"
        )
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0]
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise CifarFormatError(f"{path}: record {bad} has label byte {labels[bad]} > 9")
    return records[:, 1:], labels


def load_cifar10_binary(
    path: str | os.PathLike,
    train_count: int,
    test_count: int,
    normalization: str = "standardize",
) -> tuple[Dataset, Dataset]:
    """First ``train_count`` training and ``test_count`` test records.

    ``path`` is the ``cifar-10-batches-bin`` directory. Pixels are scaled to
    [0, 1] and then normalised per colour channel with training statistics;
    features stay in the file's channel-major 3072 layout.
    """
    root = Path(path)
    xs, ys, need = [], [], train_count
    for name in CIFAR_TRAIN_FILES:
        if need <= 0:
            break
        px, lb = read_cifar10_records(root / name, limit=need)
        xs.append(px)
        ys.append(lb)
        need -= len(lb)
    test_px, test_lb = read_cifar10_records(root / CIFAR_TEST_FILE, limit=test_count)

    train_x = np.concatenate(xs).astype(np.float64) / 255.0
    test_x = test_px.astype(np.float64) / 255.0
    train_x, test_x = _normalise(train_x, test_x, normalization, groups=3)
    return (
        Dataset(train_x, np.concatenate(ys).astype(np.intp), 10),
        Dataset(test_x, test_lb.astype(np.intp), 10),
    )
