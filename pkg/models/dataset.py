"""Labelled datasets and client partitions"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from utils.errors import DimensionError, EmptyInputError, InvalidParameterError, LabelRangeError


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Samples with inputs normalized to [0, 1] and integer labels in [0, classes)

    inputs has shape (n, *sample_shape); both arrays are read-only.
    """

    inputs: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if inputs.shape[0] != labels.size:
            raise DimensionError(f"{inputs.shape[0]} inputs but {labels.size} labels")
        if self.classes < 2:
            raise InvalidParameterError(f"Class count must be >= 2, got {self.classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise LabelRangeError(f"Labels must lie in [0, {self.classes})")
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.classes)

    def batch(self, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices, dtype=np.int64)
        return self.inputs[idx], self.labels[idx]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.classes)


@dataclass(frozen=True, eq=False)
class Partition:
    """k disjoint, non-empty index lists into a dataset of n_samples"""

    assignments: Tuple[np.ndarray, ...]
    n_samples: int

    def __post_init__(self):
        lists = tuple(np.array(a, dtype=np.int64).reshape(-1) for a in self.assignments)
        if not lists:
            raise EmptyInputError("Partition has no clients")
        seen = np.zeros(self.n_samples, dtype=bool)
        for client_id, idx in enumerate(lists):
            if idx.size == 0:
                raise EmptyInputError(f"Client {client_id} received no samples")
            if idx.min() < 0 or idx.max() >= self.n_samples:
                raise DimensionError(f"Client {client_id} has indices outside [0, {self.n_samples})")
            if seen[idx].any() or np.unique(idx).size != idx.size:
                raise DimensionError(f"Client {client_id} shares indices with another client")
            seen[idx] = True
        for idx in lists:
            idx.flags.writeable = False
        object.__setattr__(self, "assignments", lists)

    @property
    def clients(self) -> int:
        return len(self.assignments)

    def sizes(self) -> np.ndarray:
        return np.array([a.size for a in self.assignments], dtype=np.int64)

    def union(self, client_ids: Sequence[int]) -> np.ndarray:
        """Concatenated indices of the given clients, in client order"""
        parts = [self.assignments[c] for c in client_ids]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(parts)
