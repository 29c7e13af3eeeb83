"""Per-frame tracking: localize on the confidence map, estimate scale,
then refresh the sample memory and filters.

Geometry bookkeeping: the search window is a square of
``search_area_scale * sqrt(w*h) * scale`` frame pixels around the previous
centre, resampled to a fixed patch size chosen at init, so the feature grid
shape never changes while the window physically grows with the target.  The
desired response peaks at the window origin; localization therefore returns
the target displacement from the previous centre, wrap-around included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, InvalidInputError, TrackingError
from .features import (FeatureProviderConfig, FeatureStack, extract_patch,
                       fuse, hog_features, load_precomputed)
from .fourier import freqs, real_grid_from_coeffs, shift_coeffs, wrap_position
from .scale import ScaleFilter, ScaleFilterConfig
from .semantic import (SemanticMask, apply_weighting, cosine_window, label_map,
                       semantic_mask)
from .spectral import (InterpKernel, LabelSpectrum, PenaltySpectrum,
                       SampleMemory, gaussian_label, interp_kernel, learn,
                       penalty_spectrum, project_sample, response_spectrum,
                       update_filter, update_samples)

IMAG_TOLERANCE = 1e-8


@dataclass
class TrackerConfig:
    learning_rate: float = 0.009
    cg_iters: int = 5
    first_frame_cg_iters: int = 100
    max_samples: int = 50
    search_area_scale: float = 5.0
    sigma_factor: float = 0.083
    n_scales: int = 17
    scale_step: float = 1.02
    scale_learning_rate: float = 0.025
    scale_sigma: float = 1.0
    penalty_bandwidth: int = 5
    max_patch_size: int = 250
    newton_iters: int = 5
    provider: FeatureProviderConfig = field(default_factory=FeatureProviderConfig)

    def validate(self):
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ConfigError(f"learning rate must be in [0, 1], got {self.learning_rate}")
        for name in ("cg_iters", "first_frame_cg_iters", "max_samples",
                     "search_area_scale", "sigma_factor", "scale_step",
                     "max_patch_size", "newton_iters"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_scales < 1 or self.n_scales % 2 == 0:
            raise ConfigError(f"n_scales must be odd, got {self.n_scales}")
        if self.penalty_bandwidth < 3 or self.penalty_bandwidth % 2 == 0:
            raise ConfigError(f"penalty bandwidth must be odd and >= 3")
        self.provider.validate()

    def scale_config(self) -> ScaleFilterConfig:
        return ScaleFilterConfig(n_scales=self.n_scales, step=self.scale_step,
                                 sigma=self.scale_sigma,
                                 learning_rate=self.scale_learning_rate)


@dataclass
class ScoreGrid:
    """Spatial confidence map plus its spectrum for sub-cell refinement."""

    values: np.ndarray
    coeffs: np.ndarray
    max_pos: tuple[int, int]
    max_value: float

    @classmethod
    def from_coeffs(cls, coeffs: np.ndarray) -> "ScoreGrid":
        try:
            values = real_grid_from_coeffs(coeffs, imag_tol=IMAG_TOLERANCE)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        pos = np.unravel_index(int(np.argmax(values)), values.shape)
        return cls(values, coeffs, (int(pos[0]), int(pos[1])), float(values[pos]))


# ---------------------------------------------------------------------------
# feature providers
# ---------------------------------------------------------------------------

class HogProvider:
    def __init__(self, cfg: FeatureProviderConfig, patch_size: int):
        self.cell = cfg.hog_cell
        self.patch_size = patch_size

    def stack(self, frame, frame_index, center, side):
        patch = extract_patch(frame, center, side, self.patch_size)
        return fuse([hog_features(patch, self.cell)]), center, side


class FmapProvider:
    """Serves per-frame precomputed stacks; the crop geometry comes from a
    ``regions.jsonl`` sidecar when present, else the tracker's own window."""

    def __init__(self, cfg: FeatureProviderConfig):
        self.cfg = cfg
        self.directory = Path(cfg.fmap_dir)
        self.regions = {}
        sidecar = self.directory / "regions.jsonl"
        if sidecar.exists():
            for line in sidecar.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self.regions[int(rec["frame"])] = (float(rec["cx"]), float(rec["cy"]),
                                                   float(rec["side"]))

    def stack(self, frame, frame_index, center, side):
        stack = load_precomputed(self.directory, frame_index, self.cfg)
        if frame_index in self.regions:
            cx, cy, s = self.regions[frame_index]
            return stack, (cx, cy), s
        return stack, center, side


def make_provider(cfg: TrackerConfig, bbox) -> HogProvider | FmapProvider:
    pcfg = cfg.provider
    if pcfg.kind == "hog":
        side = cfg.search_area_scale * float(np.sqrt(bbox[2] * bbox[3]))
        cell = pcfg.hog_cell
        cap = (cfg.max_patch_size // cell) * cell
        size = int(min(max(int(np.ceil(side / cell)) * cell, 3 * cell, 8), cap))
        return HogProvider(pcfg, size)
    if pcfg.kind == "fmap":
        return FmapProvider(pcfg)
    raise ConfigError(f"unknown provider kind '{pcfg.kind}'")


# ---------------------------------------------------------------------------
# track state
# ---------------------------------------------------------------------------

@dataclass
class TrackState:
    center: tuple[float, float]            # (cx, cy), corner-convention pixels
    base_size: tuple[float, float]         # (w, h) at scale 1
    scale: float
    filt: np.ndarray                       # translation filter (n, Q1, Q2)
    scale_filter: ScaleFilter
    memory: SampleMemory
    frame_index: int
    side0: float                           # search window side at scale 1
    grid: tuple[int, int]                  # common spectrum grid (Q1, Q2)
    kernels: dict[tuple[int, int], InterpKernel]
    windows: dict
    label: LabelSpectrum
    penalty: PenaltySpectrum
    provider: object
    config: TrackerConfig
    last_score: float = 0.0
    last_objective: float = 0.0
    last_residual: float = 0.0
    last_cg_iters: int = 0
    last_mask: SemanticMask | None = None
    last_score_grid: np.ndarray | None = None

    @property
    def target_size(self) -> tuple[float, float]:
        return self.base_size[0] * self.scale, self.base_size[1] * self.scale

    def bbox(self) -> tuple[float, float, float, float]:
        w, h = self.target_size
        return self.center[0] - w / 2.0, self.center[1] - h / 2.0, w, h


def init(frame: np.ndarray, bbox, cfg: TrackerConfig | None = None) -> TrackState:
    """Initialize state from a first-frame bounding box (x, y, w, h)."""
    cfg = cfg or TrackerConfig()
    cfg.validate()
    frame = np.asarray(frame)
    fh, fw = frame.shape[:2]
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0 or w * h < 4.0:
        raise InvalidInputError(f"degenerate box {bbox}")
    if x < 0 or y < 0 or x + w > fw or y + h > fh:
        raise InvalidInputError(f"box {bbox} not inside {fw}x{fh} frame")

    center = (x + w / 2.0, y + h / 2.0)
    side0 = cfg.search_area_scale * float(np.sqrt(w * h))
    provider = make_provider(cfg, (x, y, w, h))
    stack, used_center, used_side = provider.stack(frame, 1, center, side0)

    grid = _common_grid(stack)
    kernels = {res: interp_kernel(res, grid) for res in set(stack.resolutions())}
    windows = {res: cosine_window(*res) for res in set(stack.resolutions())}
    q_cells = (h / used_side * grid[0], w / used_side * grid[1])
    label = gaussian_label(grid, q_cells, cfg.sigma_factor)
    penalty = penalty_spectrum(q_cells, grid, cfg.penalty_bandwidth)

    mask = _semantic_mask_for(stack, cfg.provider)
    weighted = apply_weighting(stack, mask, windows)
    sample = project_sample(weighted, kernels)

    memory = update_samples(SampleMemory(capacity=cfg.max_samples), sample, 1.0)
    learned = learn(memory, label, penalty, np.zeros_like(sample),
                    cfg.first_frame_cg_iters)

    scale_filter = ScaleFilter(cfg.scale_config())
    scale_filter.init(frame, center, (w, h), 1.0)

    return TrackState(center=center, base_size=(w, h), scale=1.0,
                      filt=learned.filter, scale_filter=scale_filter,
                      memory=memory, frame_index=1, side0=side0, grid=grid,
                      kernels=kernels, windows=windows, label=label,
                      penalty=penalty, provider=provider, config=cfg,
                      last_objective=learned.objective,
                      last_residual=learned.residual_norm,
                      last_cg_iters=learned.iterations, last_mask=mask)


def step(frame: np.ndarray, state: TrackState):
    """Advance one frame; returns (bbox, state) with state updated in place."""
    cfg = state.config
    state.frame_index += 1
    frame = np.asarray(frame)
    fh, fw = frame.shape[:2]
    side = state.side0 * state.scale

    try:
        stack, used_center, used_side = state.provider.stack(
            frame, state.frame_index, state.center, side)
        mask = _semantic_mask_for(stack, cfg.provider)
        weighted = apply_weighting(stack, mask, state.windows)
        z_test = project_sample(weighted, state.kernels)
    except DataError as exc:
        raise TrackingError(str(exc), state.frame_index) from exc

    score = ScoreGrid.from_coeffs(response_spectrum(z_test, state.filt))
    dy, dx = localize(score, cfg.newton_iters)
    q1, q2 = state.grid
    new_center = (
        float(np.clip(used_center[0] + dx / q2 * used_side, 0.0, fw)),
        float(np.clip(used_center[1] + dy / q1 * used_side, 0.0, fh)),
    )

    state.scale = _clamped_scale(
        state.scale_filter.estimate(frame, new_center, state.base_size, state.scale),
        state.base_size, (fw, fh))
    state.scale_filter.update(frame, new_center, state.base_size, state.scale)

    z_train = shift_coeffs(z_test, (-dy, -dx))
    state.memory = update_samples(state.memory, z_train, cfg.learning_rate)
    learned = learn(state.memory, state.label, state.penalty, state.filt,
                    cfg.cg_iters)
    state.filt = update_filter(state.filt, learned.filter, cfg.learning_rate)

    state.center = new_center
    state.last_score = score.max_value
    state.last_objective = learned.objective
    state.last_residual = learned.residual_norm
    state.last_cg_iters = learned.iterations
    state.last_mask = mask
    state.last_score_grid = score.values
    return state.bbox(), state


def confidence_map(filt: np.ndarray, stack: FeatureStack, kernels: dict,
                   mask, windows: dict) -> ScoreGrid:
    """Response of a filter on a raw stack, weighted like training samples."""
    weighted = apply_weighting(stack, mask, windows)
    z = project_sample(weighted, kernels)
    if z.shape != filt.shape:
        raise InvalidInputError(f"stack projects to {z.shape}, filter is {filt.shape}")
    return ScoreGrid.from_coeffs(response_spectrum(z, filt))


def localize(score: ScoreGrid, newton_iters: int = 5) -> tuple[float, float]:
    """Sub-cell displacement of the score maximum from the window origin.

    Newton refinement on the trigonometric interpolation of the score,
    started from the wrapped grid argmax.  Steps are clamped to one cell
    and backtracked whenever they would decrease the score, so the result
    never leaves the argmax cell's basin on ringing surfaces.
    """
    q1, q2 = score.values.shape
    if q1 < 3 or q2 < 3:
        raise InvalidInputError(f"score grid too small: {q1}x{q2}")
    if not np.isfinite(score.values).all():
        raise DataError("non-finite confidence scores")
    p1 = float(wrap_position(score.max_pos[0], q1))
    p2 = float(wrap_position(score.max_pos[1], q2))
    w1 = 2j * np.pi * freqs(q1) / q1
    w2 = 2j * np.pi * freqs(q2) / q2
    c = score.coeffs

    def value(a, b):
        return float((np.exp(w1 * a) @ c @ np.exp(w2 * b)).real)

    best = value(p1, p2)
    for _ in range(newton_iters):
        e1 = np.exp(w1 * p1)
        e2 = np.exp(w2 * p2)
        g1 = (e1 * w1) @ c @ e2
        g2 = e1 @ c @ (e2 * w2)
        h11 = (e1 * w1 * w1) @ c @ e2
        h22 = e1 @ c @ (e2 * w2 * w2)
        h12 = (e1 * w1) @ c @ (e2 * w2)
        grad = np.array([g1.real, g2.real])
        hess = np.array([[h11.real, h12.real], [h12.real, h22.real]])
        det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
        if det <= 0 or hess[0, 0] >= 0:
            break  # not locally concave; keep the current estimate
        step_vec = -np.linalg.solve(hess, grad)
        norm = np.abs(step_vec).max()
        if norm > 1.0:
            step_vec /= norm
        improved = False
        for _ in range(4):
            cand = value(p1 + step_vec[0], p2 + step_vec[1])
            if cand >= best:
                p1 += step_vec[0]
                p2 += step_vec[1]
                best = cand
                improved = True
                break
            step_vec *= 0.5
        if not improved:
            break
    return p1, p2


def estimate_scale(frame: np.ndarray, state: TrackState) -> float:
    """Best scale around the current one by the 1-D scale filter response."""
    return _clamped_scale(
        state.scale_filter.estimate(frame, state.center, state.base_size, state.scale),
        state.base_size, (frame.shape[1], frame.shape[0]))


def _common_grid(stack: FeatureStack) -> tuple[int, int]:
    res = stack.resolutions()
    return max(r[0] for r in res), max(r[1] for r in res)


def _semantic_mask_for(stack: FeatureStack, pcfg: FeatureProviderConfig):
    block = stack.block(pcfg.fcn_block)
    if block is None or block.channels.shape[0] != 21:
        return None
    lm = label_map(block)
    anchor = (block.channels.shape[1] // 2, block.channels.shape[2] // 2)
    return semantic_mask(lm, anchor)


def _clamped_scale(scale: float, base_size, frame_size) -> float:
    w, h = base_size
    lo = 4.0 / min(w, h)
    hi = min(frame_size[0] / w, frame_size[1] / h)
    return float(np.clip(scale, min(lo, hi), max(lo, hi)))
