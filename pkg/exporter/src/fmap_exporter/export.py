"""Batch export of named-layer activations over tracking search regions.

One shared square crop per frame feeds both networks: a window of
``area_scale * sqrt(w*h)`` pixels around the previous frame's box centre,
resampled to the configured patch size.  Each frame yields one FMAP file
holding the backbone block and the segmentation score block; the crop
geometry goes to regions.jsonl and the full run description to
manifest.json.
"""

from __future__ import annotations

import dataclasses
import json
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import __version__
from .errors import ExportConfigError, ExportDataError
from .fmap import fmap_path, write_fmap
from .models import (IMAGENET_MEAN, IMAGENET_STD, REGISTRY,
                     build_backbone, build_fcn8s)


@dataclass
class ExportConfig:
    model_id: str = "densenet201"
    level: str = "L3"
    include_fcn: bool = True
    patch_size: int = 224            # must be a multiple of 32
    area_scale: float = 5.0
    weights: str = "pretrained"      # pretrained | random
    fcn_weights_file: str | None = None
    device: str = "cpu"
    normalization: tuple = (IMAGENET_MEAN, IMAGENET_STD)

    def validate(self):
        if self.model_id not in REGISTRY:
            raise ExportConfigError(f"unknown model '{self.model_id}'")
        if self.patch_size % 32 != 0 or self.patch_size < 64:
            raise ExportConfigError(
                f"patch size must be a multiple of 32 and >= 64, got {self.patch_size}")
        if self.area_scale <= 0:
            raise ExportConfigError("area scale must be positive")

    def block_name(self) -> str:
        return f"{self.model_id}_{self.level}"


def read_boxes(path: str | Path) -> np.ndarray:
    """(x, y, w, h) rows from a ground-truth file (1-based, any separator)."""
    path = Path(path)
    if not path.exists():
        raise ExportDataError(f"missing box file {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = re.split(r"[,\t ]+", line.strip())
        try:
            vals = [float(v) for v in parts]
        except ValueError as exc:
            raise ExportDataError(f"{path}:{lineno}: cannot parse '{line.strip()}'") from exc
        if len(vals) != 4:
            raise ExportDataError(f"{path}:{lineno}: expected 4 fields")
        rows.append((vals[0] - 1.0, vals[1] - 1.0, vals[2], vals[3]))
    if not rows:
        raise ExportDataError(f"{path}: no boxes")
    return np.asarray(rows)


def list_frames(seq_dir: str | Path) -> list[Path]:
    img_dir = Path(seq_dir) / "img"
    if not img_dir.is_dir():
        raise ExportDataError(f"missing frame directory {img_dir}")
    frames = sorted((p for p in img_dir.iterdir()
                     if p.suffix.lower() in (".jpg", ".jpeg", ".png", ".bmp")),
                    key=lambda p: (int(re.findall(r"\d+", p.stem)[-1])
                                   if re.findall(r"\d+", p.stem) else 0, p.stem))
    if not frames:
        raise ExportDataError(f"no frames under {img_dir}")
    return frames


def crop_region(image: np.ndarray, center: tuple[float, float], side: float,
                out_size: int) -> np.ndarray:
    """Bilinear square crop with edge replication, matching the consumer's
    corner-convention geometry (pixel i spans [i, i+1))."""
    h, w = image.shape[:2]
    xs = center[0] - side / 2.0 + (np.arange(out_size) + 0.5) * (side / out_size) - 0.5
    ys = center[1] - side / 2.0 + (np.arange(out_size) + 0.5) * (side / out_size) - 0.5

    def lerp(arr, coords, axis, limit):
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

    rows = lerp(image.astype(np.float64), ys, 0, h)
    return lerp(rows, xs, 1, w)


class Exporter:
    def __init__(self, cfg: ExportConfig):
        cfg.validate()
        self.cfg = cfg
        torch.use_deterministic_algorithms(True)
        self.backbone = build_backbone(cfg.model_id, cfg.level, cfg.weights)
        self.fcn = build_fcn8s(cfg.weights, cfg.fcn_weights_file) if cfg.include_fcn else None
        self.device = torch.device(cfg.device)
        self.backbone.to(self.device)
        if self.fcn is not None:
            self.fcn.to(self.device)

    def blocks_for(self, crop: np.ndarray) -> list[tuple[str, np.ndarray, float]]:
        """Named activation blocks for one normalized crop in [0, 1]."""
        mean, std = self.cfg.normalization
        x = (crop - np.asarray(mean)) / np.asarray(std)
        tensor = torch.from_numpy(np.ascontiguousarray(
            x.transpose(2, 0, 1)[None], dtype=np.float32)).to(self.device)
        blocks = []
        with torch.no_grad():
            feat = self.backbone(tensor)["out"][0].cpu().numpy()
            blocks.append((self.cfg.block_name(), feat,
                           self.cfg.patch_size / feat.shape[1]))
            if self.fcn is not None:
                score = self.fcn(tensor)[0].cpu().numpy()
                blocks.append(("fcn8s_score", score,
                               self.cfg.patch_size / score.shape[1]))
        return blocks


def export_sequence(seq_dir: str | Path, out_dir: str | Path,
                    cfg: ExportConfig, boxes: np.ndarray | None = None) -> dict:
    """Write one FMAP file per frame plus regions.jsonl and manifest.json.

    The crop for frame t is centred on frame t-1's box centre (frame 1
    uses its own box), with side area_scale * sqrt(w*h) of that box.
    """
    seq_dir = Path(seq_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = list_frames(seq_dir)
    if boxes is None:
        boxes = read_boxes(seq_dir / "groundtruth_rect.txt")
    if len(boxes) != len(frames):
        raise ExportDataError(f"{seq_dir}: {len(boxes)} boxes for "
                              f"{len(frames)} frames")
    exporter = Exporter(cfg)
    started = time.time()
    regions = []
    shapes = None
    for t, frame_path in enumerate(frames):
        ref = boxes[max(t - 1, 0)]
        if not np.isfinite(ref).all() or ref[2] <= 0 or ref[3] <= 0:
            raise ExportDataError(f"frame {t + 1}: unusable reference box {ref}")
        center = (ref[0] + ref[2] / 2.0, ref[1] + ref[3] / 2.0)
        side = cfg.area_scale * float(np.sqrt(ref[2] * ref[3]))
        image = np.asarray(Image.open(frame_path).convert("RGB"),
                           dtype=np.float64) / 255.0
        crop = crop_region(image, center, side, cfg.patch_size)
        blocks = exporter.blocks_for(crop)
        got = [(n, b.shape) for n, b, _ in blocks]
        if shapes is None:
            shapes = got
        elif got != shapes:
            raise ExportDataError(f"frame {t + 1}: block shapes {got} differ "
                                  f"from frame 1 {shapes}")
        write_fmap(fmap_path(out_dir, t + 1), blocks)
        regions.append({"frame": t + 1, "cx": center[0], "cy": center[1],
                        "side": side})
    (out_dir / "regions.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in regions))
    manifest = {
        "command": "export",
        "config": dataclasses.asdict(cfg),
        "inputs": {"sequence": str(seq_dir.resolve())},
        "outputs": {"directory": str(out_dir.resolve())},
        "blocks": [{"name": n, "channels": s[0], "grid": list(s[1:])}
                   for n, s in shapes],
        "frames": len(frames),
        "versions": {"fmap_exporter": __version__, "torch": torch.__version__,
                     "numpy": np.__version__},
        "wall_clock_s": time.time() - started,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
