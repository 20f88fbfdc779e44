"""File utility functions: SBMK mask files, sidecars and JSON manifests"""

import json
import os
import struct
from typing import Dict

import numpy as np

from models.layout import LayerLayout
from models.mask import SparseMask
from utils.errors import BadMagicError, DimensionError, TruncatedFileError

MASK_MAGIC = b"SBMK"
MASK_VERSION = 1
MASK_HEADER = struct.Struct("<4sIQQ")


def ensure_parent(path: str):
    """Create the parent directory of a file path if needed"""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def sidecar_path(mask_path: str) -> str:
    return f"{mask_path}.txt"


def write_mask_file(path: str, mask: SparseMask):
    """
    Write a mask as SBMK: magic, u32 version, u64 d, u64 ones, ascending u64 indices

    All fields little-endian.
    """
    ensure_parent(path)
    indices = mask.indices.astype("<u8")
    with open(path, "wb") as f:
        f.write(MASK_HEADER.pack(MASK_MAGIC, MASK_VERSION, mask.dim, indices.size))
        f.write(indices.tobytes())


def read_mask_file(path: str, layout: LayerLayout) -> SparseMask:
    """
    Read an SBMK mask file and attach it to a layout

    Raises:
        BadMagicError: wrong magic or unsupported version
        TruncatedFileError: header or index payload is short
        DimensionError: d differs from the layout, or indices are invalid
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < MASK_HEADER.size:
        raise TruncatedFileError(f"Mask header truncated in {path}")
    magic, version, d, ones = MASK_HEADER.unpack_from(raw)
    if magic != MASK_MAGIC:
        raise BadMagicError(f"{path} is not an SBMK mask file")
    if version != MASK_VERSION:
        raise BadMagicError(f"{path} has unsupported mask version {version}")
    if d != layout.dim:
        raise DimensionError(f"Mask dimension {d} does not match model dimension {layout.dim}")
    payload = raw[MASK_HEADER.size:]
    if len(payload) < 8 * ones:
        raise TruncatedFileError(f"{path} announces {ones} indices but payload is short")
    indices = np.frombuffer(payload, dtype="<u8", count=ones).astype(np.int64)
    if ones and (indices[-1] >= d or np.any(np.diff(indices) <= 0)):
        raise DimensionError(f"{path} indices must be strictly ascending and below {d}")
    return SparseMask.from_indices(indices, layout)


def write_mask_sidecar(path: str, mask: SparseMask, occupancy_table: str) -> str:
    """Write the layout table and per-segment occupancy next to an SBMK file"""
    target = sidecar_path(path)
    ensure_parent(target)
    with open(target, "w", encoding="utf-8") as f:
        f.write(f"# SBMK v{MASK_VERSION}  d={mask.dim}  ones={mask.ones}  delta={mask.delta:.10g}\n\n")
        f.write("## layout\n")
        f.write(mask.layout.describe() + "\n\n")
        f.write("## occupancy\n")
        f.write(occupancy_table + "\n")
    return target


def write_json(path: str, data: Dict):
    """UTF-8 JSON with sorted keys"""
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
