"""Pooled, labeled two-sample data."""

from dataclasses import dataclass

import numpy as np

from rftwosample.utils.error_handling import InvalidArgumentError


def as_sample_matrix(name: str, sample) -> np.ndarray:
    arr = np.asarray(sample, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty n x p matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of (label, feature vector); X-sample rows carry label 1, Y-sample rows label 0."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise InvalidArgumentError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidArgumentError(
                f"labels must have one entry per row: {self.labels.shape} vs {self.features.shape[0]} rows"
            )
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise InvalidArgumentError("labels must be 0 or 1")

    @classmethod
    def from_samples(cls, x, y) -> "LabeledDataset":
        x = as_sample_matrix("x", x)
        y = as_sample_matrix("y", y)
        if x.shape[1] != y.shape[1]:
            raise InvalidArgumentError(
                f"column counts differ: x has {x.shape[1]}, y has {y.shape[1]}"
            )
        features = np.vstack([x, y])
        labels = np.concatenate([np.ones(x.shape[0], dtype=np.int8), np.zeros(y.shape[0], dtype=np.int8)])
        return cls(features, labels)

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def has_both_labels(self) -> bool:
        total = int(self.labels.sum())
        return 0 < total < self.n_rows

    def subset(self, rows: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[rows], self.labels[rows])

    def with_labels(self, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features, np.asarray(labels, dtype=np.int8))
