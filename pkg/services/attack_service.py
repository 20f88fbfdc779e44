"""Byzantine update generation: baselines and the hybrid sparse attack"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.special import ndtr, ndtri

from models.attack_config import ATTACK_KINDS, AttackConfig, BenignStats
from models.mask import SparseMask
from models.param_vector import ParamVector
from utils.errors import DimensionError, EmptyInputError, InvalidParameterError
from utils.linalg import index_mean, index_std, stack

MIN_OPT_MODES = ("max", "sum")
MAX_BISECTION_STEPS = 40
DEFAULT_IPM_Z = 0.4

AttackBuilder = Callable[[AttackConfig, BenignStats, Sequence[ParamVector], Optional[SparseMask]], ParamVector]

# Omniscient attacks contributed from outside this module (e.g. ROP)
ATTACK_REGISTRY: Dict[str, AttackBuilder] = {}


@dataclass(frozen=True)
class AttackOutcome:
    """Colluding Byzantine vector plus the scales that produced it"""

    vector: ParamVector
    z1: Optional[float] = None
    z2: Optional[float] = None


def benign_stats(benign_updates: Sequence[ParamVector]) -> BenignStats:
    if len(benign_updates) < 2:
        raise EmptyInputError(f"Benign statistics need at least 2 updates, got {len(benign_updates)}")
    return BenignStats(index_mean(benign_updates), index_std(benign_updates), len(benign_updates))


def std_normal_inv_cdf(p: float) -> float:
    """
    Inverse standard normal CDF

    scipy's ndtri followed by one Newton step against ndtr.
    """
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"Probability must lie in (0, 1), got {p}")
    z = float(ndtri(p))
    density = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if density > 0:
        z -= (float(ndtr(z)) - p) / density
    return z


def compute_z_max(k: int, k_m: int) -> float:
    """
    Largest ALIE scale that keeps the Byzantines inside the benign majority

    s = floor(k/2 + 1) - k_m supporters are needed; the result is
    Phi^-1((k - k_m - s) / (k - k_m)). A non-positive value means the attack
    degenerates and is logged.
    """
    if not 0 < k_m < k / 2:
        raise InvalidParameterError(f"compute_z_max needs 0 < k_m < k/2, got k={k}, k_m={k_m}")
    supporters = math.floor(k / 2 + 1) - k_m
    quantile = (k - k_m - supporters) / (k - k_m)
    z = std_normal_inv_cdf(quantile)
    if z <= 0:
        logger.warning(f"[ATTACK] ⚠️ z_max = {z:.4f} <= 0 for k={k}, k_m={k_m}: ALIE degenerates to the benign mean")
    return z


def attack_alie(stats: BenignStats, z: float, sign: int = -1) -> ParamVector:
    return stats.mean.with_data(stats.mean.data + sign * z * stats.std.data)


def attack_ipm(stats: BenignStats, z: float) -> ParamVector:
    if z <= 0:
        raise InvalidParameterError(f"IPM scale must be > 0, got {z}")
    return stats.mean.with_data(-z * stats.mean.data)


def attack_bitflip(own_gradient: ParamVector) -> ParamVector:
    return -own_gradient


def _pairwise_distances(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    dist = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        dist[i] = np.linalg.norm(matrix - matrix[i], axis=1)
    return dist


def _min_opt_threshold(matrix: np.ndarray, mode: str) -> float:
    dist = _pairwise_distances(matrix)
    if mode == "max":
        return float(dist.max())
    return float((dist ** 2).sum(axis=1).max())


def _min_opt_constraint(candidate: np.ndarray, matrix: np.ndarray, mode: str) -> float:
    dist = np.linalg.norm(matrix - candidate, axis=1)
    if mode == "max":
        return float(dist.max())
    return float((dist ** 2).sum())


def _bisect_largest_feasible(feasible: Callable[[float], bool], hi: float, tol: float) -> float:
    """Largest z in [0, hi] with feasible(z), assuming {z : feasible(z)} is an interval containing 0"""
    if feasible(hi):
        return hi
    lo = 0.0
    for _ in range(MAX_BISECTION_STEPS):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def attack_min_opt(
    stats: BenignStats,
    benign_updates: Sequence[ParamVector],
    mode: str,
    z_hi: float = 10.0,
    tol: float = 1e-3,
    sign: int = -1,
) -> Tuple[float, ParamVector]:
    """
    Adaptive Min-Max / Min-Sum attack along the -std direction

    Args:
        stats: Benign mean and std
        benign_updates: Benign momenta (>= 2)
        mode: "max" (Min-Max) or "sum" (Min-Sum)
        z_hi: Upper end of the search interval
        tol: Bisection tolerance

    Returns:
        (z*, poisoned) where poisoned = mean + sign * z* * std
    """
    if mode not in MIN_OPT_MODES:
        raise InvalidParameterError(f"Unknown min-opt mode '{mode}'")
    if len(benign_updates) < 2:
        raise EmptyInputError("Min-Max / Min-Sum need at least 2 benign updates")
    if z_hi <= 0:
        raise InvalidParameterError(f"z_hi must be > 0, got {z_hi}")
    matrix = stack(benign_updates)
    threshold = _min_opt_threshold(matrix, mode)
    mean, std = stats.mean.data, stats.std.data

    if threshold == 0.0 or not std.any():
        logger.warning(f"[ATTACK] ⚠️ Min-{mode} search degenerate (identical benign updates): z* = 0")
        return 0.0, stats.mean

    def feasible(z: float) -> bool:
        return _min_opt_constraint(mean + sign * z * std, matrix, mode) <= threshold

    z_star = _bisect_largest_feasible(feasible, z_hi, tol)
    if z_star == 0.0:
        logger.warning(f"[ATTACK] ⚠️ Min-{mode} found no feasible z > 0: sending the benign mean")
    return z_star, stats.mean.with_data(mean + sign * z_star * std)


def _check_mask(stats: BenignStats, mask) -> np.ndarray:
    bits = np.asarray(getattr(mask, "bits", mask), dtype=np.float64).reshape(-1)
    if bits.size != stats.mean.dim:
        raise DimensionError(f"Mask dimension {bits.size} does not match update dimension {stats.mean.dim}")
    return bits


def hybrid_perturbation(stats: BenignStats, mask, z1: float, z2: float) -> np.ndarray:
    """Delta = (z1 * (1 - c) + z2 * c) * std"""
    if z1 < 0 or z2 < 0:
        raise InvalidParameterError(f"Hybrid scales must be >= 0, got z1={z1}, z2={z2}")
    c = _check_mask(stats, mask)
    return (z1 * (1.0 - c) + z2 * c) * stats.std.data


def attack_hybrid_sparse(stats: BenignStats, mask, z1: float, z2: float, sign: int = -1) -> ParamVector:
    """
    Dense stealthy part z1 on unmasked coordinates, aggressive part z2 on masked ones

    Returns:
        mean - Delta (mean + Delta when sign = +1)
    """
    delta = hybrid_perturbation(stats, mask, z1, z2)
    return stats.mean.with_data(stats.mean.data + sign * delta)


def hybrid_z1_adaptive(
    stats: BenignStats,
    benign_updates: Sequence[ParamVector],
    mask,
    z2: float,
    z1_cap: float,
    tol: float = 1e-3,
    sign: int = -1,
) -> float:
    """
    Largest z1 <= z1_cap whose hybrid update satisfies the Min-Sum constraint, z2 fixed

    Returns 0 when even z1 = 0 violates the constraint.
    """
    if len(benign_updates) < 2:
        raise EmptyInputError("Adaptive z1 needs at least 2 benign updates")
    matrix = stack(benign_updates)
    threshold = _min_opt_threshold(matrix, "sum")
    mean = stats.mean.data

    def feasible(z1: float) -> bool:
        candidate = mean + sign * hybrid_perturbation(stats, mask, z1, z2)
        return _min_opt_constraint(candidate, matrix, "sum") <= threshold

    if threshold == 0.0 or not feasible(0.0):
        logger.warning(f"[ATTACK] ⚠️ Min-Sum infeasible at z1 = 0 with z2 = {z2}: using z1 = 0")
        return 0.0
    return _bisect_largest_feasible(feasible, z1_cap, tol)


def register_attack(kind: str, builder: AttackBuilder):
    """
    Plug in an omniscient attack under a new kind name

    Args:
        kind: Name used as attack.kind in experiment configs
        builder: Callable(cfg, stats, benign_momenta, mask) -> ParamVector
    """
    if kind in ATTACK_KINDS:
        raise InvalidParameterError(f"Attack '{kind}' is built in and cannot be replaced")
    ATTACK_REGISTRY[kind] = builder
    logger.info(f"[ATTACK] Registered attack '{kind}'")


def known_attack(kind: str) -> bool:
    return kind in ATTACK_KINDS or kind in ATTACK_REGISTRY


def craft_byzantine_update(
    cfg: AttackConfig,
    stats: BenignStats,
    benign_momenta: Sequence[ParamVector],
    mask: Optional[SparseMask],
    z_max: float,
) -> AttackOutcome:
    """
    Build the single vector every colluding Byzantine client sends this round

    Args:
        cfg: Attack configuration
        stats: Benign statistics of the round
        benign_momenta: Benign momenta (adversary's side information)
        mask: Sparse mask (hybrid_sparse only)
        z_max: Default ALIE scale, already clamped to >= 0

    Returns:
        AttackOutcome with the crafted vector and the scales used
    """
    kind = cfg.kind
    if kind == "alie":
        z = cfg.z if cfg.z is not None else z_max
        return AttackOutcome(attack_alie(stats, z, cfg.sign), z1=z)
    if kind == "ipm":
        z = cfg.z if cfg.z is not None else DEFAULT_IPM_Z
        return AttackOutcome(attack_ipm(stats, z), z1=z)
    if kind in ("minmax", "minsum"):
        mode = "max" if kind == "minmax" else "sum"
        z, vector = attack_min_opt(stats, benign_momenta, mode, cfg.z_hi, cfg.tol, cfg.sign)
        return AttackOutcome(vector, z1=z)
    if kind == "hybrid_sparse":
        if mask is None:
            raise InvalidParameterError("hybrid_sparse needs a mask")
        z2 = cfg.z2_max
        if cfg.z1_policy == "minsum":
            cap = cfg.z1_max if cfg.z1_max is not None else cfg.z_hi
            z1 = hybrid_z1_adaptive(stats, benign_momenta, mask, z2, cap, cfg.tol, cfg.sign)
        else:
            z1 = cfg.z1_max if cfg.z1_max is not None else z_max
        return AttackOutcome(attack_hybrid_sparse(stats, mask, z1, z2, cfg.sign), z1=z1, z2=z2)
    if kind in ATTACK_REGISTRY:
        return AttackOutcome(ATTACK_REGISTRY[kind](cfg, stats, benign_momenta, mask))
    raise InvalidParameterError(f"Attack '{kind}' does not craft a Byzantine vector")
