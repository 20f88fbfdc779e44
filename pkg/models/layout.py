"""Layer layout: named contiguous segments of a flat parameter vector"""

from dataclasses import dataclass
from enum import Enum
from math import prod
from typing import Iterable, List, Tuple

import numpy as np

from utils.errors import DimensionError, UnknownSegmentError


class SegmentKind(str, Enum):
    """Kind of parameter block a segment holds"""

    CONV = "conv"
    FC = "fully-connected"
    BIAS = "bias"


@dataclass(frozen=True)
class Segment:
    """One named block of parameters inside the flat vector"""

    name: str
    kind: SegmentKind
    offset: int
    length: int
    shape: Tuple[int, ...]

    @property
    def stop(self) -> int:
        return self.offset + self.length

    @property
    def is_weight(self) -> bool:
        return self.kind is not SegmentKind.BIAS

    def as_slice(self) -> slice:
        return slice(self.offset, self.stop)


@dataclass(frozen=True)
class LayerLayout:
    """Ordered, contiguous, non-overlapping segments covering [0, d)"""

    segments: Tuple[Segment, ...]

    def __post_init__(self):
        expected_offset = 0
        names = set()
        for seg in self.segments:
            if seg.offset != expected_offset:
                raise DimensionError(
                    f"Segment '{seg.name}' starts at {seg.offset}, expected {expected_offset}"
                )
            if seg.length <= 0:
                raise DimensionError(f"Segment '{seg.name}' has non-positive length {seg.length}")
            if prod(seg.shape) != seg.length:
                raise DimensionError(
                    f"Segment '{seg.name}' shape {seg.shape} does not hold {seg.length} values"
                )
            if seg.name in names:
                raise DimensionError(f"Duplicate segment name '{seg.name}'")
            names.add(seg.name)
            expected_offset = seg.stop

    @classmethod
    def from_shapes(cls, entries: Iterable[Tuple[str, SegmentKind, Tuple[int, ...]]]) -> "LayerLayout":
        """
        Build a layout from (name, kind, shape) entries laid out back to back

        Args:
            entries: Segment descriptions in parameter order

        Returns:
            LayerLayout with offsets filled in
        """
        segments = []
        offset = 0
        for name, kind, shape in entries:
            shape = tuple(int(s) for s in shape)
            length = prod(shape)
            segments.append(Segment(name, SegmentKind(kind), offset, length, shape))
            offset += length
        return cls(tuple(segments))

    @property
    def dim(self) -> int:
        return self.segments[-1].stop if self.segments else 0

    @property
    def weight_dim(self) -> int:
        return sum(seg.length for seg in self.weight_segments())

    @property
    def names(self) -> List[str]:
        return [seg.name for seg in self.segments]

    def weight_segments(self) -> List[Segment]:
        return [seg for seg in self.segments if seg.is_weight]

    def segment(self, name: str) -> Segment:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise UnknownSegmentError(f"Unknown layer segment '{name}'")

    def weight_index_mask(self) -> np.ndarray:
        """Boolean vector marking every coordinate that belongs to a weight segment"""
        mask = np.zeros(self.dim, dtype=bool)
        for seg in self.weight_segments():
            mask[seg.as_slice()] = True
        return mask

    def segment_ids(self) -> np.ndarray:
        """Per-coordinate index of the owning segment"""
        ids = np.empty(self.dim, dtype=np.int64)
        for i, seg in enumerate(self.segments):
            ids[seg.as_slice()] = i
        return ids

    def describe(self) -> str:
        """Plain-text segment table (used by mask sidecars)"""
        lines = [f"{'name':<16} {'kind':<16} {'offset':>10} {'length':>10}  shape"]
        for seg in self.segments:
            shape = "x".join(str(s) for s in seg.shape)
            lines.append(
                f"{seg.name:<16} {seg.kind.value:<16} {seg.offset:>10} {seg.length:>10}  {shape}"
            )
        return "\n".join(lines)
