"""Dataset ingestion, synthetic blobs and client partitioning"""

import gzip
import os
import struct
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from config import Config
from models.dataset import Dataset, Partition
from models.experiment import DataConfig
from utils.errors import (
    BadMagicError,
    CountMismatchError,
    DatasetError,
    InvalidParameterError,
    LabelRangeError,
    TruncatedFileError,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"
MNIST_CLASSES = 10


def _read_maybe_gzip(path: str) -> bytes:
    """Read a file, transparently decompressing it when it starts with the gzip magic"""
    if not os.path.exists(path):
        raise DatasetError(f"Dataset file not found: {path}")
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise TruncatedFileError(f"Corrupt gzip stream in {path}: {e}") from e
    return raw


def _parse_idx_images(raw: bytes, path: str) -> np.ndarray:
    if len(raw) < 16:
        raise TruncatedFileError(f"IDX image header truncated in {path}")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGES_MAGIC:
        raise BadMagicError(f"Expected image magic 0x{IMAGES_MAGIC:08x} in {path}, got 0x{magic:08x}")
    size = n * rows * cols
    if len(raw) - 16 < size:
        raise TruncatedFileError(f"{path} announces {n} images of {rows}x{cols} but payload is short")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=size, offset=16)
    return pixels.reshape(n, rows, cols).astype(np.float64) / 255.0


def _parse_idx_labels(raw: bytes, path: str) -> np.ndarray:
    if len(raw) < 8:
        raise TruncatedFileError(f"IDX label header truncated in {path}")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != LABELS_MAGIC:
        raise BadMagicError(f"Expected label magic 0x{LABELS_MAGIC:08x} in {path}, got 0x{magic:08x}")
    if len(raw) - 8 < n:
        raise TruncatedFileError(f"{path} announces {n} labels but payload is short")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path: str, labels_path: str, classes: int = MNIST_CLASSES) -> Dataset:
    """
    Parse a big-endian IDX image/label pair (plain or gzip-compressed)

    Args:
        images_path: IDX3 image file (magic 0x00000803)
        labels_path: IDX1 label file (magic 0x00000801)
        classes: Number of label classes

    Returns:
        Dataset with pixels scaled to [0, 1]

    Raises:
        BadMagicError, TruncatedFileError, CountMismatchError
    """
    images = _parse_idx_images(_read_maybe_gzip(images_path), images_path)
    labels = _parse_idx_labels(_read_maybe_gzip(labels_path), labels_path)
    if images.shape[0] != labels.size:
        raise CountMismatchError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.size} labels"
        )
    logger.debug(f"[DATA] Loaded {labels.size} samples of {images.shape[1]}x{images.shape[2]} from {images_path}")
    return Dataset(images, labels, classes)


def find_mnist_file(directory: str, name: str) -> str:
    """Locate an MNIST file by base name, accepting a .gz variant"""
    for candidate in (name, f"{name}.gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise DatasetError(f"MNIST file '{name}' not found in {directory}")


def mnist_available(directory: Optional[str] = None) -> bool:
    directory = directory or Config.DATA_FOLDER
    try:
        for name in Config.MNIST_FILES.values():
            find_mnist_file(directory, name)
    except DatasetError:
        return False
    return True


def load_mnist(directory: Optional[str] = None) -> Tuple[Dataset, Dataset]:
    directory = directory or Config.DATA_FOLDER
    files = {key: find_mnist_file(directory, name) for key, name in Config.MNIST_FILES.items()}
    train = load_idx(files["train_images"], files["train_labels"])
    test = load_idx(files["test_images"], files["test_labels"])
    logger.info(f"[DATA] ✅ MNIST loaded from {directory}: {len(train)} train / {len(test)} test")
    return train, test


def _blob_centers(classes: int, dim: int) -> np.ndarray:
    # centers depend only on (classes, dim) so train and test splits share them
    rng = np.random.default_rng(np.random.SeedSequence([classes, dim]))
    return rng.uniform(0.1, 0.9, size=(classes, dim))


def synthetic_blobs(classes: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """
    Isotropic Gaussian blobs around fixed class centers, clipped to [0, 1]

    Args:
        classes: Number of classes C (>= 2)
        per_class: Samples per class
        dim: Feature dimension
        spread: Standard deviation around each center
        seed: Sampling seed

    Returns:
        Dataset of C * per_class samples ordered class by class
    """
    if classes < 2 or dim < 1 or per_class < 1:
        raise InvalidParameterError(f"Blobs need C >= 2, dim >= 1, per_class >= 1 (got {classes}, {dim}, {per_class})")
    if spread < 0:
        raise InvalidParameterError(f"Blob spread must be >= 0, got {spread}")
    centers = _blob_centers(classes, dim)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((classes, per_class, dim)) * spread
    inputs = np.clip(centers[:, None, :] + noise, 0.0, 1.0).reshape(classes * per_class, dim)
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    return Dataset(inputs, labels, classes)


def partition_iid(ds: Dataset, k: int, seed: int) -> Partition:
    """
    Shuffle each class and deal its samples round-robin to k clients

    The dealing position carries over from one class to the next, so client
    sizes differ by at most one.
    """
    n = len(ds)
    if k < 1 or n < k:
        raise InvalidParameterError(f"Cannot split {n} samples among {k} clients")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    position = 0
    for c in range(ds.classes):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        for idx in members:
            buckets[position % k].append(int(idx))
            position += 1
    return Partition(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets), n)


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    missing = total - int(counts.sum())
    if missing > 0:
        fractions = raw - counts
        order = np.lexsort((np.arange(proportions.size), -fractions))
        counts[order[:missing]] += 1
    return counts


def partition_dirichlet(ds: Dataset, k: int, alpha: float, seed: int) -> Partition:
    """
    Non-IID split: per class, client shares p ~ Dir(alpha * 1_k)

    Each class is apportioned by largest remainder; afterwards every empty
    client takes one sample from the currently largest client (lowest id on ties).
    """
    if alpha <= 0:
        raise InvalidParameterError(f"Dirichlet alpha must be > 0, got {alpha}")
    n = len(ds)
    if k < 1 or n < k:
        raise InvalidParameterError(f"Cannot split {n} samples among {k} clients")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    for c in range(ds.classes):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        shares = rng.dirichlet(np.full(k, float(alpha)))
        counts = _largest_remainder(shares, members.size)
        start = 0
        for client_id, count in enumerate(counts):
            buckets[client_id].extend(int(i) for i in members[start:start + count])
            start += count

    repaired = 0
    for client_id in range(k):
        if buckets[client_id]:
            continue
        donor = int(np.argmax([len(b) for b in buckets]))
        buckets[client_id].append(buckets[donor].pop())
        repaired += 1
    if repaired:
        logger.debug(f"[DATA] Dirichlet split repaired {repaired} empty client(s)")
    return Partition(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets), n)


def flip_label(y: int, classes: int) -> int:
    """Label-flip attack transform: y -> (C - 1) - y"""
    if not 0 <= y < classes:
        raise LabelRangeError(f"Label {y} outside [0, {classes})")
    return classes - 1 - y


def flip_labels(labels: np.ndarray, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise LabelRangeError(f"Labels must lie in [0, {classes})")
    return classes - 1 - labels


def load_training_data(data_cfg: DataConfig, classes: int, input_size: int, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Load (train, test) datasets for an experiment

    Args:
        data_cfg: Data section of the experiment config
        classes: Class count of the model
        input_size: Flattened model input size (blob dimension default)
        seed: Experiment seed

    Returns:
        Tuple of (train, test)
    """
    if data_cfg.source == "mnist":
        train, test = load_mnist(data_cfg.directory)
        if classes != MNIST_CLASSES:
            raise DatasetError(f"MNIST has {MNIST_CLASSES} classes but the model expects {classes}")
        return train, test

    dim = data_cfg.blobs_dim or input_size
    train = synthetic_blobs(classes, data_cfg.blobs_per_class, dim, data_cfg.blobs_spread, seed)
    test = synthetic_blobs(classes, data_cfg.blobs_test_per_class, dim, data_cfg.blobs_spread, seed + 1)
    logger.info(f"[DATA] ✅ Synthetic blobs: {classes} classes, dim {dim}, {len(train)} train / {len(test)} test")
    return train, test


def partition_dataset(ds: Dataset, data_cfg: DataConfig, k: int, seed: int) -> Partition:
    if data_cfg.partition == "dirichlet":
        return partition_dirichlet(ds, k, data_cfg.alpha, seed)
    return partition_iid(ds, k, seed)
