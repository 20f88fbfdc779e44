"""Adversary side information and attack configuration"""

from dataclasses import dataclass
from math import sqrt
from typing import Optional

from models.param_vector import ParamVector
from utils.errors import DimensionError, InvalidParameterError

ATTACK_KINDS = ("none", "bitflip", "labelflip", "alie", "ipm", "minmax", "minsum", "hybrid_sparse")
Z1_POLICIES = ("fixed", "minsum")
# Chebyshev guidance: z2 beyond sqrt(2) makes the sparse part visible
Z2_GUIDANCE = sqrt(2.0)
Z2_SLACK = 0.1


@dataclass(frozen=True)
class BenignStats:
    """Index-wise mean and population std of the benign momenta"""

    mean: ParamVector
    std: ParamVector
    count: int

    def __post_init__(self):
        if self.mean.dim != self.std.dim:
            raise DimensionError(f"Mean dimension {self.mean.dim} != std dimension {self.std.dim}")
        if (self.std.data < 0).any():
            raise InvalidParameterError("Standard deviation must be non-negative")


@dataclass(frozen=True)
class AttackConfig:
    """
    Attack selection and scaling parameters.

    z: IPM scale (default 0.4) or fixed ALIE scale (default z_max when None)
    z1_max: fixed dense scale, or the search cap under the minsum policy
    z2_max: sparse aggressive scale on masked coordinates
    sign: -1 perturbs as mean - z*std, +1 as mean + z*std
    """

    kind: str = "none"
    z: Optional[float] = None
    z1_policy: str = "fixed"
    z1_max: Optional[float] = None
    z2_max: float = 1.5
    z_hi: float = 10.0
    tol: float = 1e-3
    sign: int = -1

    def __post_init__(self):
        if self.z1_policy not in Z1_POLICIES:
            raise InvalidParameterError(f"Unknown z1 policy '{self.z1_policy}'")
        if self.sign not in (-1, 1):
            raise InvalidParameterError(f"Perturbation sign must be -1 or +1, got {self.sign}")
        if self.z_hi <= 0 or self.tol <= 0:
            raise InvalidParameterError("Search bound z_hi and tolerance must be > 0")
        if self.z2_max < 0 or (self.z1_max is not None and self.z1_max < 0):
            raise InvalidParameterError("Scaling parameters z1, z2 must be >= 0")

    @property
    def omniscient(self) -> bool:
        """Attacks that replace the Byzantine momentum with a crafted vector"""
        return self.kind not in ("none", "bitflip", "labelflip")

    @property
    def z2_above_guidance(self) -> bool:
        return self.z2_max > Z2_GUIDANCE * (1.0 + Z2_SLACK)
