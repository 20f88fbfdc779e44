"""Per-round attack diagnostics: escape ratios, drift, angles and selection rates"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from models.param_vector import ParamVector
from utils.errors import DimensionError, InfeasibleAggregationError
from utils.linalg import angle_degrees, cosine_similarity, l2_norm, stack

ESCAPE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DriftMetrics:
    """Byzantine drift from the reference; None marks an undefined metric"""

    norm: float
    angle_deg: Optional[float]
    temporal_cos: Optional[float]
    effective: Optional[ParamVector]


def escape_ratio_cm(byz: ParamVector, aggregate: ParamVector) -> float:
    """Fraction of coordinates where the aggregate equals the Byzantine value"""
    if byz.dim != aggregate.dim:
        raise DimensionError(f"Dimension mismatch: {byz.dim} vs {aggregate.dim}")
    return float(np.mean(np.abs(aggregate.data - byz.data) <= ESCAPE_TOLERANCE))


def escape_ratio_tm(byz: ParamVector, updates: Sequence[ParamVector], k_m: int) -> float:
    """
    Fraction of coordinates where the Byzantine value survives trimming

    Copies equal to the Byzantine value occupy sorted ranks
    [less, less + equal); the value survives when any of those ranks lies in
    [k_m, k - k_m).
    """
    matrix = stack(updates)
    k = matrix.shape[0]
    if k <= 2 * k_m:
        raise InfeasibleAggregationError(f"Trimmed mean needs k > 2*k_m, got k={k}, k_m={k_m}")
    if matrix.shape[1] != byz.dim:
        raise DimensionError(f"Dimension mismatch: {byz.dim} vs {matrix.shape[1]}")
    less = (matrix < byz.data).sum(axis=0)
    equal = (matrix == byz.data).sum(axis=0)
    survives = (less < k - k_m) & (less + equal > k_m)
    return float(np.mean(survives))


def reference_drift_metrics(
    byz: ParamVector, ref: ParamVector, tau: float, prev_effective: Optional[ParamVector]
) -> DriftMetrics:
    """
    Drift of the Byzantine update from the reference, after clipping to radius tau

    Args:
        byz: Byzantine update of the round
        ref: Reference (previous aggregate)
        tau: Clipping radius
        prev_effective: Effective perturbation of the previous round, if any

    Returns:
        DriftMetrics(norm, angle between effective and ref, cosine to prev_effective)
    """
    if byz.dim != ref.dim:
        raise DimensionError(f"Dimension mismatch: {byz.dim} vs {ref.dim}")
    drift = byz - ref
    norm = l2_norm(drift)
    if norm == 0.0:
        return DriftMetrics(0.0, None, None, None)
    effective = drift * min(1.0, tau / norm)

    angle = angle_degrees(effective, ref) if l2_norm(ref) > 0 else None
    temporal = None
    if prev_effective is not None and l2_norm(prev_effective) > 0:
        temporal = cosine_similarity(effective, prev_effective)
    return DriftMetrics(norm, angle, temporal, effective)


def byzantine_selection_fraction(selected_ids: Iterable[int], byzantine_ids: Iterable[int]) -> Optional[float]:
    """Share of Byzantine clients picked by a selection rule (None without Byzantines)"""
    byzantine = set(byzantine_ids)
    if not byzantine:
        return None
    return len(byzantine.intersection(selected_ids)) / len(byzantine)
