"""Datasets: CIFAR-10 binary reader, synthetic blobs, splits and batching."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import CorruptionError, IngestionError, UsageError

CIFAR_RECORD = 3073
CIFAR_PER_FILE = 10000
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise UsageError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise UsageError(f"labels outside [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.class_count, self.name)

    def to_csv(self, path) -> None:
        """Write one row per sample: label followed by the flattened input."""
        flat = self.inputs.reshape(len(self), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label"] + [f"x{i}" for i in range(flat.shape[1])])
            for y, row in zip(self.labels, flat):
                w.writerow([int(y)] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    shuffle: bool = True
    seed: int = 0


# --------------------------------------------------------------------------
# CIFAR-10
# --------------------------------------------------------------------------


def read_cifar_file(path) -> tuple:
    """Parse one CIFAR-10 binary batch into (uint8 images (n,3,32,32), labels)."""
    try:
        raw = np.fromfile(path, dtype=np.uint8)
    except FileNotFoundError:
        raise IngestionError(f"missing CIFAR-10 file {path}") from None
    if raw.size % CIFAR_RECORD:
        offset = (raw.size // CIFAR_RECORD) * CIFAR_RECORD
        raise IngestionError(
            f"{path}: truncated record at byte offset {offset} "
            f"({raw.size - offset} of {CIFAR_RECORD} bytes)"
        )
    records = raw.reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise CorruptionError(
            f"{path}: label byte {labels[bad[0]]} > 9 at byte offset {bad[0] * CIFAR_RECORD}"
        )
    images = records[:, 1:].reshape(-1, 3, 32, 32)
    return images, labels


def _normalize(images: np.ndarray) -> np.ndarray:
    return images.astype(np.float64) / 255.0 - 0.5


def load_cifar10(directory, classes: Optional[Sequence[int]] = None) -> tuple:
    """Read the extracted binary distribution; returns ``(train, test)``.

    ``classes`` keeps only the listed CIFAR labels, relabelled 0..k-1 in the
    given order.
    """
    parts = [read_cifar_file(os.path.join(directory, f)) for f in CIFAR_TRAIN_FILES]
    train = Dataset(
        _normalize(np.concatenate([p[0] for p in parts])),
        np.concatenate([p[1] for p in parts]),
        10,
        "cifar10-train",
    )
    img, lab = read_cifar_file(os.path.join(directory, CIFAR_TEST_FILE))
    test = Dataset(_normalize(img), lab, 10, "cifar10-test")
    if classes is not None:
        train, test = select_classes(train, classes), select_classes(test, classes)
    return train, test


def select_classes(ds: Dataset, classes: Sequence[int]) -> Dataset:
    classes = list(classes)
    if len(set(classes)) != len(classes) or any(c < 0 or c >= ds.class_count for c in classes):
        raise UsageError(f"invalid class subset {classes}")
    keep = np.isin(ds.labels, classes)
    remap = np.full(ds.class_count, -1)
    remap[classes] = np.arange(len(classes))
    return Dataset(ds.inputs[keep], remap[ds.labels[keep]], len(classes), ds.name)


# --------------------------------------------------------------------------
# synthetic
# --------------------------------------------------------------------------


def make_blobs(n: int, classes: int, dims: int, spread: float, seed: int, center_box: float = 1.0) -> Dataset:
    """Isotropic Gaussian clusters, centres uniform in [-center_box, center_box]^dims."""
    if n < classes:
        raise UsageError(f"need n >= classes, got n={n}, classes={classes}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_box, center_box, (classes, dims))
    labels = np.arange(n) % classes
    labels = labels[rng.permutation(n)]
    inputs = centers[labels] + spread * rng.standard_normal((n, dims))
    return Dataset(inputs, labels, classes, f"blobs-{classes}x{dims}")


def split(ds: Dataset, fraction: float, seed: int) -> tuple:
    """Stratified split; the first part holds roughly ``fraction`` of each class."""
    if not 0 < fraction < 1:
        raise UsageError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    first, second = [], []
    # largest-remainder allocation keeps the overall count at round(fraction * n)
    groups = [np.flatnonzero(ds.labels == c) for c in range(ds.class_count)]
    exact = np.array([fraction * len(g) for g in groups])
    alloc = np.floor(exact).astype(int)
    short = int(round(fraction * len(ds))) - alloc.sum()
    order = np.argsort(-(exact - alloc), kind="stable")
    alloc[order[:short]] += 1
    for g, k in zip(groups, alloc):
        g = g[rng.permutation(len(g))]
        first.append(g[:k])
        second.append(g[k:])
    a, b = np.sort(np.concatenate(first)), np.sort(np.concatenate(second))
    if a.size == 0 or b.size == 0:
        raise UsageError(f"fraction {fraction} leaves one side of the split empty")
    return ds.take(a), ds.take(b)


# --------------------------------------------------------------------------
# batching
# --------------------------------------------------------------------------


def epoch_order(n: int, plan: BatchPlan, epoch: int = 0) -> np.ndarray:
    if not plan.shuffle:
        return np.arange(n)
    return np.random.default_rng([plan.seed, epoch]).permutation(n)


def batches(ds: Dataset, plan: BatchPlan, epoch: int = 0) -> Iterator[Batch]:
    """Yield ``ceil(n / batch_size)`` batches covering every sample once."""
    if plan.batch_size < 1:
        raise UsageError("batch_size must be >= 1")
    order = epoch_order(len(ds), plan, epoch)
    for start in range(0, len(ds), plan.batch_size):
        idx = order[start : start + plan.batch_size]
        yield Batch(ds.inputs[idx], ds.labels[idx])
