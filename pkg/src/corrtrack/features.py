"""Image patch sampling, feature blocks, and the FMAP interchange format.

A feature stack is an ordered list of named blocks; each block holds C
channel grids of shape (R1, R2) plus the stride in patch pixels per cell.
Blocks of different resolutions are aligned later through interpolation
kernels, never by resampling here.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hog as _hog
from .errors import ConfigError, DataError, FormatError, InvalidInputError

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1


@dataclass(frozen=True)
class ImagePatch:
    """Square image window resampled to a fixed size.

    ``source_rect`` is (x, y, side, side) in frame coordinates and may
    extend past the frame bounds (edge replication fills the overhang).
    """

    pixels: np.ndarray                       # (S, S, 3) float in [0, 1]
    source_rect: tuple[float, float, float, float]


@dataclass(frozen=True)
class FeatureBlock:
    name: str
    channels: np.ndarray                     # (C, R1, R2) float
    stride: float                            # patch pixels per cell
    provenance: str = "precomputed"

    @property
    def resolution(self) -> tuple[int, int]:
        return self.channels.shape[1], self.channels.shape[2]


@dataclass(frozen=True)
class FeatureStack:
    blocks: tuple[FeatureBlock, ...]

    @property
    def total_channels(self) -> int:
        return sum(b.channels.shape[0] for b in self.blocks)

    def resolutions(self) -> list[tuple[int, int]]:
        return [b.resolution for b in self.blocks]

    def block(self, name: str) -> FeatureBlock | None:
        for b in self.blocks:
            if b.name == name:
                return b
        return None


@dataclass
class FeatureProviderConfig:
    """Which feature source backs the translation filter."""

    kind: str = "hog"                        # hog | fmap
    hog_cell: int = 4
    fmap_dir: str | None = None
    expected_shapes: dict[str, tuple[int, int, int]] | None = None
    fcn_block: str = "fcn8s_score"           # block used for the semantic mask

    def validate(self):
        if self.kind not in ("hog", "fmap"):
            raise ConfigError(f"unknown feature provider kind '{self.kind}'")
        if self.kind == "hog" and self.hog_cell < 1:
            raise ConfigError(f"hog cell must be positive, got {self.hog_cell}")
        if self.kind == "fmap" and not self.fmap_dir:
            raise ConfigError("feature provider 'fmap' requires a feature directory")


def as_float_image(frame: np.ndarray) -> np.ndarray:
    """Coerce a frame to (H, W, 3) float64 in [0, 1] (no copy if already so)."""
    frame = np.asarray(frame)
    if frame.dtype == np.uint8:
        frame = frame.astype(np.float64) / 255.0
    elif frame.dtype != np.float64:
        frame = frame.astype(np.float64)
    if frame.ndim == 2:
        frame = np.repeat(frame[:, :, None], 3, axis=2)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise InvalidInputError(f"expected HxWx3 frame, got shape {frame.shape}")
    return frame


def resample_window(frame: np.ndarray, center: tuple[float, float],
                    size: tuple[float, float], out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of an axis-aligned window to ``out_shape``.

    ``center`` is (cx, cy) in corner-convention coordinates (pixel i spans
    [i, i+1)); ``size`` is (width, height).  Samples outside the frame
    replicate the nearest edge pixel.
    """
    frame = as_float_image(frame)
    h, w = frame.shape[:2]
    if h == 0 or w == 0:
        raise InvalidInputError("frame has zero area")
    (cx, cy), (sw, sh) = center, size
    oh, ow = out_shape
    xs = cx - sw / 2.0 + (np.arange(ow) + 0.5) * (sw / ow) - 0.5
    ys = cy - sh / 2.0 + (np.arange(oh) + 0.5) * (sh / oh) - 0.5
    rows = _lerp_axis(frame, ys, axis=0, limit=h)
    return _lerp_axis(rows, xs, axis=1, limit=w)


def _lerp_axis(arr: np.ndarray, coords: np.ndarray, axis: int, limit: int) -> np.ndarray:
    lo = np.floor(coords)
    frac = coords - lo
    i0 = np.clip(lo.astype(np.int64), 0, limit - 1)
    i1 = np.clip(i0 + 1, 0, limit - 1)
    a0 = np.take(arr, i0, axis=axis)
    a1 = np.take(arr, i1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = len(coords)
    f = frac.reshape(shape)
    return a0 * (1.0 - f) + a1 * f


def extract_patch(frame: np.ndarray, center: tuple[float, float],
                  side: float, out_size: int) -> ImagePatch:
    """Square search-region patch centred at ``center``, resampled square."""
    if side <= 0:
        raise InvalidInputError(f"patch side must be positive, got {side}")
    if out_size < 8:
        raise InvalidInputError(f"output size must be >= 8, got {out_size}")
    pixels = resample_window(frame, center, (side, side), (out_size, out_size))
    if not np.isfinite(pixels).all():
        raise InvalidInputError("frame holds non-finite pixels")
    rect = (center[0] - side / 2.0, center[1] - side / 2.0, float(side), float(side))
    return ImagePatch(pixels, rect)


def hog_features(patch: ImagePatch, cell: int) -> FeatureBlock:
    """31-channel HOG block over the patch at ``cell`` pixels per cell."""
    h, w = patch.pixels.shape[:2]
    if cell > min(h, w):
        raise InvalidInputError(f"cell {cell} larger than patch {h}x{w}")
    if h % cell or w % cell:
        raise InvalidInputError(f"patch {h}x{w} not divisible by cell {cell}")
    channels = _hog.fhog(patch.pixels, cell)
    return FeatureBlock("hog", channels, float(cell), provenance="hog")


def fuse(blocks: list[FeatureBlock]) -> FeatureStack:
    """Concatenate blocks preserving block and channel order."""
    if not blocks:
        raise InvalidInputError("cannot fuse an empty block list")
    names = [b.name for b in blocks]
    if len(set(names)) != len(names):
        raise InvalidInputError(f"duplicate block names: {names}")
    return FeatureStack(tuple(blocks))


# ---------------------------------------------------------------------------
# FMAP binary interchange
# ---------------------------------------------------------------------------

def fmap_path(directory: str | Path, frame_index: int) -> Path:
    return Path(directory) / f"frame_{frame_index:06d}.fmap"


def write_fmap(path: str | Path, stack: FeatureStack) -> None:
    """Serialize a stack: little-endian, f32 values, channel-major."""
    buf = io.BytesIO()
    buf.write(FMAP_MAGIC)
    buf.write(struct.pack("<II", FMAP_VERSION, len(stack.blocks)))
    for b in stack.blocks:
        name = b.name.encode("utf-8")
        c, r1, r2 = b.channels.shape
        buf.write(struct.pack("<I", len(name)))
        buf.write(name)
        buf.write(struct.pack("<IIIf", c, r1, r2, b.stride))
        buf.write(np.ascontiguousarray(b.channels, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_fmap(path: str | Path) -> FeatureStack:
    """Parse one FMAP file; raises FormatError/DataError on bad content."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    view = memoryview(raw)
    if len(raw) < 12 or view[:4] != FMAP_MAGIC:
        raise FormatError(f"{path}: bad magic, not an FMAP file")
    version, block_count = struct.unpack_from("<II", raw, 4)
    if version != FMAP_VERSION:
        raise FormatError(f"{path}: unsupported FMAP version {version}")
    off = 12
    blocks = []
    try:
        for _ in range(block_count):
            (name_len,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            c, r1, r2, stride = struct.unpack_from("<IIIf", raw, off)
            off += 16
            count = c * r1 * r2
            vals = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
            off += 4 * count
            blocks.append(FeatureBlock(name, vals.reshape(c, r1, r2).copy(), float(stride)))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: truncated or corrupt FMAP data: {exc}") from exc
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return FeatureStack(tuple(blocks))


def load_precomputed(directory: str | Path, frame_index: int,
                     cfg: FeatureProviderConfig) -> FeatureStack:
    """Load one frame's stack and validate it against the provider config."""
    path = fmap_path(directory, frame_index)
    if not path.exists():
        raise DataError(f"missing feature file {path}")
    stack = read_fmap(path)
    if cfg.expected_shapes is not None:
        for b in stack.blocks:
            want = cfg.expected_shapes.get(b.name)
            if want is not None and tuple(b.channels.shape) != tuple(want):
                raise ConfigError(f"{path}: block '{b.name}' has shape "
                                  f"{b.channels.shape}, config expects {want}")
        missing = set(cfg.expected_shapes) - {b.name for b in stack.blocks}
        if missing:
            raise ConfigError(f"{path}: missing expected blocks {sorted(missing)}")
    for b in stack.blocks:
        if not np.isfinite(b.channels).all():
            raise DataError(f"{path}: non-finite values in block '{b.name}'")
    return stack
