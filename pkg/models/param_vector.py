"""Flat parameter / update vector with optional layer layout"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from models.layout import LayerLayout
from utils.errors import DimensionError, NonFiniteError


@dataclass(frozen=True, eq=False)
class ParamVector:
    """
    Immutable float64 vector holding parameters, gradients, momenta or perturbations.

    Construction copies the data, marks it read-only and rejects NaN/Inf,
    so every ParamVector in circulation is finite.
    """

    data: np.ndarray
    layout: Optional[LayerLayout] = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"Vector of dimension {arr.size} contains NaN or Inf")
        if self.layout is not None and self.layout.dim != arr.size:
            raise DimensionError(
                f"Vector dimension {arr.size} does not match layout dimension {self.layout.dim}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def of(cls, values: Union[Sequence[float], np.ndarray], layout: Optional[LayerLayout] = None) -> "ParamVector":
        return cls(np.asarray(values, dtype=np.float64), layout)

    @classmethod
    def zeros(cls, d: int, layout: Optional[LayerLayout] = None) -> "ParamVector":
        return cls(np.zeros(d, dtype=np.float64), layout)

    @property
    def dim(self) -> int:
        return int(self.data.size)

    def __len__(self) -> int:
        return self.dim

    def with_data(self, values: np.ndarray) -> "ParamVector":
        """New vector with the same layout and different values"""
        return ParamVector(values, self.layout)

    def _check_dim(self, other: "ParamVector"):
        if self.dim != other.dim:
            raise DimensionError(f"Dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self._check_dim(other)
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self._check_dim(other)
        return self.with_data(self.data - other.data)

    def __neg__(self) -> "ParamVector":
        return self.with_data(-self.data)

    def __mul__(self, scalar: float) -> "ParamVector":
        return self.with_data(self.data * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        head = ", ".join(f"{x:.4g}" for x in self.data[:4])
        more = ", ..." if self.dim > 4 else ""
        return f"ParamVector(d={self.dim}, [{head}{more}])"
