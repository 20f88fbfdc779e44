"""Binary attack masks and the policies that generate them"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from models.layout import LayerLayout
from utils.errors import DimensionError, InvalidParameterError

MASK_KINDS = ("random_global", "random_layerwise", "erk", "force", "snip")
# Kinds that select by saliency and so can honour per-segment caps
CAPPED_MASK_KINDS = ("force", "snip")


@dataclass(frozen=True)
class LayerOccupancy:
    name: str
    ones: int
    length: int

    @property
    def fraction(self) -> float:
        return self.ones / self.length


@dataclass(frozen=True, eq=False)
class SparseMask:
    """
    Binary selector c over all d coordinates.

    Ones mark the coordinates perturbed with the aggressive scale z2.
    """

    bits: np.ndarray
    layout: LayerLayout

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.int8, copy=True).reshape(-1)
        if bits.size != self.layout.dim:
            raise DimensionError(f"Mask dimension {bits.size} does not match layout {self.layout.dim}")
        if not np.isin(bits, (0, 1)).all():
            raise InvalidParameterError("Mask entries must be 0 or 1")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_indices(cls, indices, layout: LayerLayout) -> "SparseMask":
        bits = np.zeros(layout.dim, dtype=np.int8)
        bits[np.asarray(indices, dtype=np.int64)] = 1
        return cls(bits, layout)

    @classmethod
    def empty(cls, layout: LayerLayout) -> "SparseMask":
        return cls(np.zeros(layout.dim, dtype=np.int8), layout)

    @property
    def dim(self) -> int:
        return int(self.bits.size)

    @property
    def ones(self) -> int:
        return int(self.bits.sum())

    @property
    def delta(self) -> float:
        """Achieved global ones-fraction"""
        return self.ones / self.dim

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @property
    def per_layer(self) -> Dict[str, float]:
        return {row.name: row.fraction for row in self.occupancy()}

    def occupancy(self) -> List[LayerOccupancy]:
        return [
            LayerOccupancy(seg.name, int(self.bits[seg.as_slice()].sum()), seg.length)
            for seg in self.layout.segments
        ]

    def as_float(self) -> np.ndarray:
        return self.bits.astype(np.float64)


@dataclass(frozen=True)
class MaskPolicy:
    """
    How to build the attack mask.

    kind: random_global | random_layerwise | erk | force | snip
    critical: set the critical layers to all-ones after generation
    caps: per-segment maximum density (e.g. {"fc2.weight": 0.25}), force and snip only
    steps, batch_size: FORCE schedule length and per-client mini-batch size
    """

    kind: str = "random_layerwise"
    delta: float = 0.005
    critical: bool = False
    caps: Tuple[Tuple[str, float], ...] = field(default_factory=tuple)
    seed: int = 0
    steps: int = 10
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise InvalidParameterError(f"Unknown mask method '{self.kind}'")
        if not 0.0 <= self.delta <= 1.0:
            raise InvalidParameterError(f"Mask delta must lie in [0, 1], got {self.delta}")
        for name, cap in self.caps:
            if not 0.0 < cap <= 1.0:
                raise InvalidParameterError(f"Cap for '{name}' must lie in (0, 1], got {cap}")
        if self.caps and self.kind not in CAPPED_MASK_KINDS:
            raise InvalidParameterError(f"Density caps need a saliency mask (force or snip), not '{self.kind}'")
        if self.steps < 1 or self.batch_size < 1:
            raise InvalidParameterError("FORCE steps and batch size must be >= 1")

    @property
    def cap_map(self) -> Dict[str, float]:
        return dict(self.caps)
