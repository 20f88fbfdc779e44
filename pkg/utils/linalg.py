"""Vector arithmetic and index-wise statistics over ParamVectors"""

import math
from typing import Sequence

import numpy as np

from models.param_vector import ParamVector
from utils.errors import DimensionError, EmptyInputError, UndefinedDirectionError


def _check_same_dim(a: ParamVector, b: ParamVector):
    if a.dim != b.dim:
        raise DimensionError(f"Dimension mismatch: {a.dim} vs {b.dim}")


def stack(vs: Sequence[ParamVector]) -> np.ndarray:
    """
    Stack vectors row-wise in the given order

    Args:
        vs: Non-empty sequence of equal-dimension vectors

    Returns:
        (n, d) float64 matrix
    """
    if len(vs) == 0:
        raise EmptyInputError("Cannot stack an empty set of vectors")
    d = vs[0].dim
    for v in vs:
        if v.dim != d:
            raise DimensionError(f"Dimension mismatch: {d} vs {v.dim}")
    return np.vstack([v.data for v in vs])


def l2_norm(v: ParamVector) -> float:
    if v.dim == 0:
        raise DimensionError("Norm of an empty vector")
    return float(np.linalg.norm(v.data))


def dot(a: ParamVector, b: ParamVector) -> float:
    _check_same_dim(a, b)
    return float(np.dot(a.data, b.data))


def cosine_similarity(a: ParamVector, b: ParamVector) -> float:
    """
    Cosine of the angle between two vectors, clamped to [-1, 1]

    Raises:
        UndefinedDirectionError: if either vector has zero norm
    """
    _check_same_dim(a, b)
    na, nb = l2_norm(a), l2_norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedDirectionError("Cosine similarity with a zero-norm vector")
    cos = dot(a, b) / (na * nb)
    return min(1.0, max(-1.0, cos))


def angle_degrees(a: ParamVector, b: ParamVector) -> float:
    return math.degrees(math.acos(cosine_similarity(a, b)))


def index_mean(vs: Sequence[ParamVector]) -> ParamVector:
    matrix = stack(vs)
    # left-to-right accumulation in the given order
    total = np.zeros(matrix.shape[1], dtype=np.float64)
    for row in matrix:
        total += row
    return vs[0].with_data(total / matrix.shape[0])


def index_std(vs: Sequence[ParamVector]) -> ParamVector:
    """Coordinate-wise population standard deviation (divides by n)"""
    if len(vs) < 2:
        raise EmptyInputError(f"Standard deviation needs at least 2 vectors, got {len(vs)}")
    matrix = stack(vs)
    mean = index_mean(vs).data
    total = np.zeros(matrix.shape[1], dtype=np.float64)
    for row in matrix:
        diff = row - mean
        total += diff * diff
    return vs[0].with_data(np.sqrt(total / matrix.shape[0]))
