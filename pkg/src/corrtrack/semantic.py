"""Semantic masking and cosine windowing of fused feature stacks.

A per-position class label map is taken from the 21 segmentation score
channels; the binary mask keeps positions sharing the label under the
anchor (the target's previous position).  Combined with the separable sine
window, the weighting is applied channel-wise to every block of a stack,
after shifting values by -0.5.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .features import FeatureBlock, FeatureStack

N_CLASSES = 21


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray                 # (R1, R2) int in {0..21}; 0 = no strict winner


@dataclass(frozen=True)
class SemanticMask:
    mask: np.ndarray                   # (R1, R2) float in {0, 1}
    anchor: tuple[int, int]
    anchor_label: int


@dataclass(frozen=True)
class WeightGrid:
    weights: np.ndarray                # (d1, d2) float in [0, 1]


def label_map(fcn_block: FeatureBlock) -> LabelMap:
    """Per-position 1-based argmax class; 0 where the maximum is not strict."""
    x = fcn_block.channels
    if x.shape[0] != N_CLASSES:
        raise InvalidInputError(f"expected {N_CLASSES} score channels, got {x.shape[0]}")
    top = x.max(axis=0)
    winners = (x == top[None]).sum(axis=0)
    labels = np.where(winners == 1, np.argmax(x, axis=0) + 1, 0)
    return LabelMap(labels.astype(np.int64))


def semantic_mask(lm: LabelMap, anchor: tuple[int, int]) -> SemanticMask:
    """Indicator of the anchor's label region; all-ones when the anchor
    carries label 0 (no confident class there, so nothing is suppressed)."""
    r1, r2 = lm.labels.shape
    i, j = anchor
    if not (0 <= i < r1 and 0 <= j < r2):
        raise InvalidInputError(f"anchor {anchor} outside {r1}x{r2} label grid")
    anchor_label = int(lm.labels[i, j])
    if anchor_label == 0:
        mask = np.ones((r1, r2))
    else:
        mask = (lm.labels == anchor_label).astype(np.float64)
    return SemanticMask(mask, (i, j), anchor_label)


def cosine_window(d1: int, d2: int) -> WeightGrid:
    """Separable sin(pi*i/d1) * sin(pi*j/d2) taper, zero on the i=0/j=0 rows."""
    if d1 < 2 or d2 < 2:
        raise InvalidInputError(f"window needs d1, d2 >= 2, got {d1}x{d2}")
    w1 = np.sin(np.pi * np.arange(d1) / d1)
    w2 = np.sin(np.pi * np.arange(d2) / d2)
    return WeightGrid(np.outer(w1, w2))


def resample_mask(mask: SemanticMask, resolution: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resample of the binary mask onto another grid."""
    src = mask.mask
    r1, r2 = resolution
    if src.shape == (r1, r2):
        return src
    i = np.clip(np.round((np.arange(r1) + 0.5) * src.shape[0] / r1 - 0.5).astype(int),
                0, src.shape[0] - 1)
    j = np.clip(np.round((np.arange(r2) + 0.5) * src.shape[1] / r2 - 0.5).astype(int),
                0, src.shape[1] - 1)
    return src[i[:, None], j[None, :]]


def apply_weighting(stack: FeatureStack, mask, windows: dict) -> FeatureStack:
    """Weight every channel: (x - 0.5) * mask * window, per resolution.

    ``mask`` may be None (no semantic weighting), one SemanticMask on the
    segmentation grid (resampled per block), or a dict keyed by resolution.
    ``windows`` maps each block resolution to its WeightGrid.
    """
    out = []
    for block in stack.blocks:
        res = block.resolution
        window = windows.get(res)
        if window is None or window.weights.shape != res:
            raise InvalidInputError(f"no window matching block '{block.name}' at {res}")
        if mask is None:
            m = 1.0
        elif isinstance(mask, dict):
            got = mask.get(res)
            if got is None or got.mask.shape != res:
                raise InvalidInputError(f"no mask matching block '{block.name}' at {res}")
            m = got.mask
        else:
            m = resample_mask(mask, res)
        weight = window.weights * m
        out.append(FeatureBlock(block.name, (block.channels - 0.5) * weight[None],
                                block.stride, block.provenance))
    return FeatureStack(tuple(out))


def write_mask_pgm(path: str | Path, mask: SemanticMask) -> None:
    """Binary PGM debug dump (255 inside the mask)."""
    arr = (mask.mask > 0.5).astype(np.uint8) * 255
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())
