"""FMAP binary writer (little-endian, f32, channel-major).

Layout: magic "FMAP", u32 version=1, u32 block_count; per block u32
name_len, UTF-8 name, u32 C, u32 R1, u32 R2, f32 stride, then C*R1*R2
f32 values.  One file per frame, named frame_%06d.fmap.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FMAP"
VERSION = 1


def fmap_path(directory, frame_index: int) -> Path:
    return Path(directory) / f"frame_{frame_index:06d}.fmap"


def write_fmap(path, blocks: list[tuple[str, np.ndarray, float]]) -> None:
    """Write named (C, R1, R2) channel blocks with their strides."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(blocks)))
    for name, channels, stride in blocks:
        encoded = name.encode("utf-8")
        c, r1, r2 = channels.shape
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<IIIf", c, r1, r2, stride))
        buf.write(np.ascontiguousarray(channels, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())
