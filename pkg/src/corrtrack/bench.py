"""Dataset ingestion and one-pass evaluation with precision/success metrics.

Sequence layout on disk: ``<root>/<name>/img/*.jpg`` (or .png), a
``groundtruth_rect.txt`` with one "x,y,w,h" line per frame (1-based pixel
coordinates, separators may be commas, tabs, or spaces), and an optional
``attrs.txt`` holding comma-separated challenge attribute tags.

Metrics follow the usual one-pass evaluation: the tracker is initialized
from the first frame's ground truth only and run once; precision counts
frames whose centre error is under a pixel threshold, success counts frames
whose overlap exceeds an IoU threshold, and the success curve's mean over a
101-point threshold grid is the AUC score.
"""

from __future__ import annotations

import concurrent.futures
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import tracker as _tracker
from .errors import DataError, InvalidInputError
from .features import as_float_image

ATTRIBUTES = ("IV", "OPR", "SV", "OCC", "DEF", "MB", "FM", "IPR", "OV", "BC", "LR")

PRECISION_THRESHOLDS = np.arange(0.0, 51.0, 1.0)
SUCCESS_THRESHOLDS = np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass
class Sequence:
    name: str
    frames: list[Path]
    boxes: np.ndarray                    # (N, 4) float, 0-based x, y, w, h
    attributes: frozenset = frozenset()

    def __len__(self) -> int:
        return len(self.frames)

    def load_frame(self, index: int) -> np.ndarray:
        return as_float_image(np.asarray(Image.open(self.frames[index]).convert("RGB")))


@dataclass
class Curve:
    thresholds: np.ndarray
    values: np.ndarray


@dataclass
class SequenceResult:
    name: str
    boxes: np.ndarray
    precision: Curve
    success: Curve
    precision_at_20: float
    success_at_half: float
    auc: float
    attributes: frozenset = frozenset()
    error: str | None = None


@dataclass
class EvalReport:
    label: str
    sequences: list[SequenceResult]
    precision_at_20: float
    success_at_half: float
    auc: float
    mean_precision: Curve
    mean_success: Curve
    per_attribute: dict[str, dict[str, float]]
    failures: list[str] = field(default_factory=list)

    @property
    def average_score(self) -> float:
        """Mean of precision@20 and success AUC, the ranking figure."""
        return 0.5 * (self.precision_at_20 + self.auc)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def load_sequence(directory: str | Path) -> Sequence:
    directory = Path(directory)
    img_dir = directory / "img"
    if not img_dir.is_dir():
        raise DataError(f"missing frame directory {img_dir}")
    frames = sorted((p for p in img_dir.iterdir()
                     if p.suffix.lower() in (".jpg", ".jpeg", ".png", ".bmp")),
                    key=_numeric_key)
    if not frames:
        raise DataError(f"no frames under {img_dir}")
    gt_path = directory / "groundtruth_rect.txt"
    if not gt_path.exists():
        raise DataError(f"missing ground-truth file {gt_path}")
    boxes = _parse_boxes(gt_path)
    if len(boxes) != len(frames):
        raise DataError(f"{directory.name}: {len(boxes)} ground-truth boxes "
                        f"for {len(frames)} frames")
    attrs = frozenset()
    attr_path = directory / "attrs.txt"
    if attr_path.exists():
        tags = [t.strip() for t in attr_path.read_text().replace("\n", ",").split(",")
                if t.strip()]
        unknown = set(tags) - set(ATTRIBUTES)
        if unknown:
            raise DataError(f"{attr_path}: unknown attribute tags {sorted(unknown)}")
        attrs = frozenset(tags)
    return Sequence(directory.name, frames, boxes, attrs)


def _numeric_key(path: Path):
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else 0, path.stem)


def _parse_boxes(path: Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = re.split(r"[,\t ]+", line.strip())
        try:
            vals = [float(v) for v in parts]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: cannot parse '{line.strip()}'") from exc
        if len(vals) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(vals)}")
        # file coordinates are 1-based
        rows.append((vals[0] - 1.0, vals[1] - 1.0, vals[2], vals[3]))
    return np.asarray(rows, dtype=float)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def center_error(a, b) -> float:
    """Euclidean distance between box centres; boxes are (x, y, w, h)."""
    _check_box(a)
    _check_box(b)
    dx = (a[0] + a[2] / 2.0) - (b[0] + b[2] / 2.0)
    dy = (a[1] + a[3] / 2.0) - (b[1] + b[3] / 2.0)
    return float(np.hypot(dx, dy))


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    _check_box(a)
    _check_box(b)
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return float(inter / union)


def _check_box(box):
    if box[2] <= 0 or box[3] <= 0:
        raise InvalidInputError(f"box must have positive size: {tuple(box)}")


def _valid_rows(results, gt):
    results = np.asarray(results, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if len(results) != len(gt):
        raise DataError(f"{len(results)} result boxes vs {len(gt)} ground-truth boxes")
    # frames without usable annotation are excluded from the denominators
    ok = np.isfinite(gt).all(axis=1) & (gt[:, 2] > 0) & (gt[:, 3] > 0)
    return results[ok], gt[ok]


def precision_curve(results, gt, thresholds=PRECISION_THRESHOLDS) -> Curve:
    """Fraction of frames with centre error strictly under each threshold."""
    res, ref = _valid_rows(results, gt)
    errs = np.asarray([center_error(a, b) for a, b in zip(res, ref)])
    values = np.asarray([(errs < t).mean() if len(errs) else 0.0 for t in thresholds])
    return Curve(np.asarray(thresholds, dtype=float), values)


def success_curve(results, gt, thresholds=SUCCESS_THRESHOLDS):
    """Fraction of frames with overlap strictly above each threshold, and
    the curve's mean over the grid (AUC)."""
    res, ref = _valid_rows(results, gt)
    ious = np.asarray([iou(a, b) for a, b in zip(res, ref)])
    values = np.asarray([(ious > t).mean() if len(ious) else 0.0 for t in thresholds])
    curve = Curve(np.asarray(thresholds, dtype=float), values)
    return curve, float(values.mean())


# ---------------------------------------------------------------------------
# trackers (engine plus harness stubs)
# ---------------------------------------------------------------------------

class EngineTracker:
    """The correlation-filter engine behind the common init/step interface."""

    def __init__(self, cfg: _tracker.TrackerConfig, sequence: Sequence):
        self.cfg = cfg
        self.state = None

    def init(self, frame, box):
        self.state = _tracker.init(frame, box, self.cfg)

    def step(self, frame):
        box, self.state = _tracker.step(frame, self.state)
        return box


class GtEchoTracker:
    """Harness stub: replays the ground truth (upper bound / plumbing tests)."""

    def __init__(self, cfg, sequence: Sequence):
        self.boxes = sequence.boxes
        self.index = 0

    def init(self, frame, box):
        self.index = 0

    def step(self, frame):
        self.index += 1
        return tuple(self.boxes[self.index])


class ConstantBoxTracker:
    """Harness stub: never moves from the initial box (lower bound)."""

    def __init__(self, cfg, sequence: Sequence):
        self.box = None

    def init(self, frame, box):
        self.box = tuple(box)

    def step(self, frame):
        return self.box


TRACKER_FACTORIES = {
    "engine": EngineTracker,
    "gt_echo": GtEchoTracker,
    "const_box": ConstantBoxTracker,
}


def make_tracker(cfg: _tracker.TrackerConfig, sequence: Sequence, kind: str = "engine"):
    try:
        return TRACKER_FACTORIES[kind](cfg, sequence)
    except KeyError:
        raise InvalidInputError(f"unknown tracker kind '{kind}'") from None


# ---------------------------------------------------------------------------
# one-pass evaluation
# ---------------------------------------------------------------------------

def track_sequence(sequence: Sequence, cfg: _tracker.TrackerConfig,
                   tracker_kind: str = "engine") -> np.ndarray:
    """Run one pass over a sequence; returns per-frame (x, y, w, h) boxes."""
    tracker = make_tracker(cfg, sequence, tracker_kind)
    tracker.init(sequence.load_frame(0), tuple(sequence.boxes[0]))
    boxes = [tuple(sequence.boxes[0])]
    for i in range(1, len(sequence)):
        boxes.append(tuple(tracker.step(sequence.load_frame(i))))
    return np.asarray(boxes, dtype=float)


def evaluate_sequence(sequence: Sequence, boxes: np.ndarray) -> SequenceResult:
    prec = precision_curve(boxes, sequence.boxes)
    succ, auc = success_curve(boxes, sequence.boxes)
    return SequenceResult(
        name=sequence.name, boxes=boxes, precision=prec, success=succ,
        precision_at_20=float(prec.values[20]),
        success_at_half=float(succ.values[50]),
        auc=auc, attributes=sequence.attributes)


def run_ope(dataset: list[Sequence], cfg: _tracker.TrackerConfig,
            tracker_kind: str = "engine", jobs: int = 1,
            label: str = "engine") -> EvalReport:
    """One-pass evaluation over a dataset; failures are recorded, not fatal."""
    dataset = sorted(dataset, key=lambda s: s.name)

    def work(seq: Sequence):
        try:
            return evaluate_sequence(seq, track_sequence(seq, cfg, tracker_kind))
        except Exception as exc:  # noqa: BLE001 - reported in the report
            return SequenceResult(seq.name, np.zeros((0, 4)),
                                  Curve(PRECISION_THRESHOLDS, np.zeros(51)),
                                  Curve(SUCCESS_THRESHOLDS, np.zeros(101)),
                                  0.0, 0.0, 0.0, seq.attributes,
                                  error=f"{type(exc).__name__}: {exc}")

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, dataset))
    else:
        results = [work(seq) for seq in dataset]
    results.sort(key=lambda r: r.name)
    return summarize(results, label)


def summarize(results: list[SequenceResult], label: str) -> EvalReport:
    ok = [r for r in results if r.error is None]
    failures = [f"{r.name}: {r.error}" for r in results if r.error is not None]

    def agg(selected):
        if not selected:
            return 0.0, 0.0, 0.0
        return (float(np.mean([r.precision_at_20 for r in selected])),
                float(np.mean([r.success_at_half for r in selected])),
                float(np.mean([r.auc for r in selected])))

    p20, s50, auc = agg(ok)
    mean_prec = Curve(PRECISION_THRESHOLDS,
                      np.mean([r.precision.values for r in ok], axis=0)
                      if ok else np.zeros(51))
    mean_succ = Curve(SUCCESS_THRESHOLDS,
                      np.mean([r.success.values for r in ok], axis=0)
                      if ok else np.zeros(101))
    per_attr = {}
    for tag in ATTRIBUTES:
        tagged = [r for r in ok if tag in r.attributes]
        if tagged:
            tp, ts, ta = agg(tagged)
            per_attr[tag] = {"precision_at_20": tp, "success_at_half": ts,
                             "auc": ta, "sequences": len(tagged)}
    return EvalReport(label, results, p20, s50, auc, mean_prec, mean_succ,
                      per_attr, failures)


def rank_reports(reports: list[EvalReport]) -> list[EvalReport]:
    """Order provider reports by the mean of precision@20 and success AUC."""
    return sorted(reports, key=lambda r: r.average_score, reverse=True)
