"""Synthetic 2-d benchmark datasets and CSV ingestion.

All generators are deterministic for a given seed and produce exactly
balanced classes. "Noise" means isotropic Gaussian jitter of the stated
standard deviation added to the noiseless curve geometry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

# Documented constants for the three-class blob benchmarks: a wide
# triangle for the single blobs (per-class spreads 1.0, 2.5, 0.5) and a
# hexagon whose opposite vertices share a class for the double blobs.
SINGLE_BLOB_CENTERS = ((0.0, 8.0), (-7.0, -4.0), (7.0, -4.0))
SINGLE_BLOB_STDS = (1.0, 2.5, 0.5)
DOUBLE_BLOB_RADIUS = 8.0
DOUBLE_BLOB_LABELS = (0, 1, 2, 0, 1, 2)


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must match the number of feature rows")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels out of range for class_count")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]


@dataclass
class Scaler:
    """Per-feature z-score parameters fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std

    def as_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Scaler":
        return cls(
            mean=np.asarray(payload["mean"], dtype=np.float64),
            std=np.asarray(payload["std"], dtype=np.float64),
        )


def _check_even(n: int) -> int:
    if n < 2 or n % 2:
        raise ValueError(f"n must be an even number >= 2, got {n}")
    return n // 2


def gen_moons(n: int, noise_std: float = 0.1, seed: int = 0) -> LabeledDataset:
    """Two interleaving half-circle arcs of unit radius.

    Class 0 is the upper arc around the origin; class 1 is its point
    reflection shifted by (1, -0.5).
    """
    half = _check_even(n)
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    theta = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(theta), np.sin(theta)])
    lower = np.column_stack([1.0 - np.cos(theta), 1.0 - np.sin(theta) - 0.5])
    features = np.vstack([upper, lower])
    if noise_std > 0:
        features = features + rng.normal(0.0, noise_std, size=features.shape)
    labels = np.repeat([0, 1], half)
    return LabeledDataset(features, labels, class_count=2)


def gen_circles(
    n: int, noise_std: float = 0.1, inner_factor: float = 0.5, seed: int = 0
) -> LabeledDataset:
    """Concentric circles: class 0 at radius 1, class 1 at ``inner_factor``."""
    half = _check_even(n)
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if not 0 < inner_factor < 1:
        raise ValueError(f"inner_factor must lie in (0, 1), got {inner_factor}")
    rng = np.random.default_rng(seed)
    theta = np.linspace(0.0, 2.0 * np.pi, half, endpoint=False)
    outer = np.column_stack([np.cos(theta), np.sin(theta)])
    inner = inner_factor * outer
    features = np.vstack([outer, inner])
    if noise_std > 0:
        features = features + rng.normal(0.0, noise_std, size=features.shape)
    labels = np.repeat([0, 1], half)
    return LabeledDataset(features, labels, class_count=2)


def gen_spirals(
    n: int, noise_std: float = 0.1, turns: float = 1.75, seed: int = 0
) -> LabeledDataset:
    """Two interlocked spiral arms with radius growing linearly in angle.

    A point at parameter theta sits at radius theta / theta_max where
    theta_max = 2 pi turns; the second arm is the first rotated by pi.
    """
    half = _check_even(n)
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if turns <= 0:
        raise ValueError(f"turns must be > 0, got {turns}")
    rng = np.random.default_rng(seed)
    theta_max = 2.0 * np.pi * turns
    theta = rng.uniform(0.0, theta_max, size=half)
    radius = theta / theta_max
    arm = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    features = np.vstack([arm, -arm])
    if noise_std > 0:
        features = features + rng.normal(0.0, noise_std, size=features.shape)
    labels = np.repeat([0, 1], half)
    return LabeledDataset(features, labels, class_count=2)


def gen_blobs(
    n: int,
    centers: Sequence[Sequence[float]],
    stds: Sequence[float],
    seed: int = 0,
    labels: Sequence[int] | None = None,
) -> LabeledDataset:
    """Isotropic Gaussian blobs, one per center, n / len(centers) points each.

    ``labels`` assigns a class to each center (defaults to one class per
    center), which lets several blobs share a class.
    """
    centers = np.asarray(centers, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise ValueError("need at least two 2-d centers")
    if stds.shape != (centers.shape[0],):
        raise ValueError("need one standard deviation per center")
    if labels is None:
        labels = np.arange(centers.shape[0], dtype=np.int64)
    else:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (centers.shape[0],):
            raise ValueError("need one label per center")
    if n % centers.shape[0]:
        raise ValueError(f"n={n} not divisible by {centers.shape[0]} centers")
    per_center = n // centers.shape[0]
    rng = np.random.default_rng(seed)
    parts = []
    part_labels = []
    for center, std, label in zip(centers, stds, labels):
        parts.append(center + rng.normal(0.0, 1.0, size=(per_center, 2)) * std)
        part_labels.append(np.full(per_center, label, dtype=np.int64))
    return LabeledDataset(
        np.vstack(parts), np.concatenate(part_labels), class_count=int(labels.max()) + 1
    )


def gen_single_blobs(n: int, seed: int = 0) -> LabeledDataset:
    """Three-class blobs at the documented triangle layout."""
    return gen_blobs(n, SINGLE_BLOB_CENTERS, SINGLE_BLOB_STDS, seed=seed)


def gen_double_blobs(n: int, seed: int = 0) -> LabeledDataset:
    """Three classes of two blobs each on a hexagon, all with std 1.0."""
    angles = np.arange(6) * (np.pi / 3.0)
    centers = DOUBLE_BLOB_RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])
    return gen_blobs(n, centers, np.ones(6), seed=seed, labels=DOUBLE_BLOB_LABELS)


def save_csv(data: LabeledDataset, path) -> None:
    """Write a dataset as CSV: feature columns, label last, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{k}" for k in range(data.feature_count)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([format(v, ".17g") for v in row] + [int(label)])


def load_csv(path) -> LabeledDataset:
    """Parse a dataset CSV (optional header, label in the last column)."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if line_no == 1:
                try:
                    float(row[0])
                except ValueError:
                    continue  # header line
            if len(row) < 2:
                raise ValueError(f"{path}: row {line_no}: need features and a label")
            try:
                features = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError:
                raise ValueError(f"{path}: row {line_no}: malformed value") from None
            rows.append((line_no, features, label))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0][1])
    for line_no, features, _ in rows:
        if len(features) != width:
            raise ValueError(f"{path}: row {line_no}: inconsistent column count")
    features = np.array([r[1] for r in rows])
    labels = np.array([r[2] for r in rows], dtype=np.int64)
    if labels.min() < 0:
        raise ValueError(f"{path}: negative class label")
    return LabeledDataset(features, labels, class_count=int(labels.max()) + 1)


def iris_path() -> Path:
    """Path of the bundled Iris measurements (150 rows, 4 features, 3 classes)."""
    return Path(resources.files("meshnn") / "datasets" / "iris.csv")


def load_iris() -> LabeledDataset:
    return load_csv(iris_path())


def split_standardize(
    data: LabeledDataset, train_fraction: float = 0.7, seed: int = 0
) -> tuple[LabeledDataset, LabeledDataset, Scaler]:
    """Stratified shuffle split plus z-score standardization.

    The split preserves per-class proportions; the scaler is fitted on
    the training split only and applied to both sides. Constant features
    keep their raw scale (std treated as 1).
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx = []
    test_idx = []
    for c in range(data.class_count):
        idx = np.flatnonzero(data.labels == c)
        if idx.shape[0] < 2:
            raise ValueError(f"class {c} has fewer than 2 samples")
        rng.shuffle(idx)
        k = int(round(train_fraction * idx.shape[0]))
        k = min(max(k, 1), idx.shape[0] - 1)
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    rng.shuffle(train_idx)
    rng.shuffle(test_idx)
    mean = data.features[train_idx].mean(axis=0)
    std = data.features[train_idx].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    scaler = Scaler(mean=mean, std=std)
    train = LabeledDataset(
        scaler.transform(data.features[train_idx]), data.labels[train_idx], data.class_count
    )
    test = LabeledDataset(
        scaler.transform(data.features[test_idx]), data.labels[test_idx], data.class_count
    )
    return train, test, scaler
