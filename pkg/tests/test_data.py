from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from fodp.core import ConfigError
from fodp.data import (
    CIFAR_RECORD_BYTES,
    CifarFormatError,
    DatasetSpec,
    build_dataset,
    load_cifar10_binary,
    read_cifar10_records,
)

SMALL = DatasetSpec(num_classes=3, dim=5, per_class_count=20, test_per_class_count=10)


def test_synthetic_counts_and_determinism():
    tr, te = build_dataset(DatasetSpec())
    assert (len(tr), len(te), tr.dim) == (5000, 2000, 64)
    assert np.bincount(tr.labels).tolist() == [500] * 10
    tr2, _ = build_dataset(DatasetSpec())
    assert tr.features.tobytes() == tr2.features.tobytes()


def test_synthetic_standardised():
    tr, te = build_dataset(SMALL)
    assert np.all(np.abs(tr.features.mean(axis=0)) < 1e-6)
    assert np.all(np.isfinite(te.features))


def test_data_seed_changes_data():
    a, _ = build_dataset(SMALL)
    b, _ = build_dataset(replace(SMALL, data_seed=1))
    assert not np.array_equal(a.features, b.features)


def test_zero_std_nearest_centroid_perfect():
    tr, te = build_dataset(replace(SMALL, cluster_std=0.0))
    centroids = np.array([tr.features[tr.labels == k].mean(axis=0) for k in range(3)])
    pred = np.argmin(((te.features[:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == te.labels) == 1.0


def test_dataset_config_validation():
    with pytest.raises(ConfigError):
        DatasetSpec(source="svhn")
    with pytest.raises(ConfigError):
        DatasetSpec(num_classes=10, dim=5)
    with pytest.raises(ConfigError):
        DatasetSpec(source="cifar10_binary")


def test_subset_and_example():
    tr, _ = build_dataset(SMALL)
    sub = tr.subset(np.array([0, 25]))
    assert len(sub) == 2 and sub.example(1).label == tr.labels[25]


def _record(label: int, seed: int) -> bytes:
    px = np.random.default_rng(seed).integers(0, 256, size=3072, dtype=np.uint8)
    return bytes([label]) + px.tobytes()


@pytest.fixture
def cifar_dir(tmp_path):
    for i in range(1, 6):
        (tmp_path / f"data_batch_{i}.bin").write_bytes(_record(3, i) + _record(7, 10 + i))
    (tmp_path / "test_batch.bin").write_bytes(_record(1, 99) + _record(9, 98))
    return tmp_path


def test_first_record_decodes(cifar_dir):
    px, lb = read_cifar10_records(cifar_dir / "data_batch_1.bin")
    assert lb.tolist() == [3, 7]
    expected = np.random.default_rng(1).integers(0, 256, size=3072, dtype=np.uint8)
    np.testing.assert_array_equal(px[0], expected)


def test_record_count_limits(cifar_dir):
    tr, te = load_cifar10_binary(cifar_dir, 5, 1)
    assert (len(tr), len(te), tr.dim) == (5, 1, 3072)
    assert tr.labels.tolist() == [3, 7, 3, 7, 3]
    tr, _ = load_cifar10_binary(cifar_dir, 100, 2)
    assert len(tr) == 10


def test_cifar_per_channel_standardised(cifar_dir):
    tr, _ = load_cifar10_binary(cifar_dir, 10, 2)
    for c in range(3):
        assert abs(tr.features[:, c * 1024:(c + 1) * 1024].mean()) < 1e-6


def test_cifar_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_cifar10_records(tmp_path / "missing.bin")
    (tmp_path / "bad.bin").write_bytes(_record(255, 0))
    with pytest.raises(CifarFormatError):
        read_cifar10_records(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(_record(1, 0)[: CIFAR_RECORD_BYTES - 5])
    with pytest.raises(CifarFormatError):
        read_cifar10_records(tmp_path / "short.bin")
