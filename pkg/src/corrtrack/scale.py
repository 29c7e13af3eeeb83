"""Scale estimation with a 1-D correlation filter over a patch pyramid.

Candidate scales form an exact geometric grid around the current scale.
Each candidate window (target extent times the candidate factor) is resized
to a fixed model size, described by HOG features, and the per-scale feature
columns are correlated along the scale axis with a learned 1-D filter whose
desired response peaks at the current scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hog as _hog
from .features import resample_window

MIN_PATCH_SIDE = 4.0   # smallest source window worth describing


@dataclass
class ScaleFilterConfig:
    n_scales: int = 17
    step: float = 1.02
    sigma: float = 1.0          # label stddev in scale-step units
    learning_rate: float = 0.025
    regularization: float = 1e-2
    model_size: int = 48        # candidate windows are resized to this square
    padding: float = 1.5        # window extent relative to the target box
    hog_cell: int = 4


class ScaleFilter:
    """1-D discriminative filter over the scale axis.

    With the default padding the target spans model_size/padding = 32
    pixels of the model window; the surrounding context stabilizes the
    estimate against sub-pixel localization error.
    """

    def __init__(self, cfg: ScaleFilterConfig | None = None):
        self.cfg = cfg or ScaleFilterConfig()
        n = self.cfg.n_scales
        self.half = n // 2
        self.factors = self.cfg.step ** np.arange(-self.half, self.half + 1)
        label = np.exp(-0.5 * ((np.arange(n) - self.half) / self.cfg.sigma) ** 2)
        self.label_f = np.fft.fft(label)
        self.window = np.hanning(n) if n > 1 else np.ones(1)
        self.num = None
        self.den = None

    def init(self, frame, center, base_size, scale):
        xf, _ = self._pyramid(frame, center, base_size, scale)
        self.num = self.label_f[None, :] * np.conj(xf)
        self.den = np.sum(np.conj(xf) * xf, axis=0).real

    def update(self, frame, center, base_size, scale):
        xf, _ = self._pyramid(frame, center, base_size, scale)
        lr = self.cfg.learning_rate
        self.num = (1 - lr) * self.num + lr * (self.label_f[None, :] * np.conj(xf))
        self.den = (1 - lr) * self.den + lr * np.sum(np.conj(xf) * xf, axis=0).real

    def estimate(self, frame, center, base_size, scale) -> float:
        """Best candidate scale around ``scale`` by filter response.

        The discrete argmax over the geometric candidate grid is refined to
        a sub-step extremum by a parabola through the neighbouring bins
        (the cited scale-search method interpolates its response the same
        way); the refinement never moves past the adjacent candidates.
        """
        xf, valid = self._pyramid(frame, center, base_size, scale)
        resp = np.where(valid, self.responses(xf), -np.inf)
        k = int(np.argmax(resp))
        n = self.cfg.n_scales
        lo, hi = resp[(k - 1) % n], resp[(k + 1) % n]
        delta = 0.0
        if np.isfinite(lo) and np.isfinite(hi):
            curvature = lo - 2.0 * resp[k] + hi
            if curvature < 0.0:
                delta = float(np.clip(0.5 * (lo - hi) / curvature, -0.5, 0.5))
        return float(scale * self.cfg.step ** (k - self.half + delta))

    def responses(self, xf: np.ndarray) -> np.ndarray:
        den = self.den + self.cfg.regularization * max(float(self.den.mean()), 1e-12)
        return np.fft.ifft(np.sum(self.num * xf, axis=0) / den).real

    def _pyramid(self, frame, center, base_size, scale):
        """HOG feature columns for the candidate windows, scale-windowed.

        Candidates whose source window would fall under one HOG cell are
        dropped from the valid range and contribute zero columns.
        """
        cfg = self.cfg
        grid = cfg.model_size // cfg.hog_cell
        dim = 31 * grid * grid
        cols = np.zeros((dim, cfg.n_scales))
        valid = np.zeros(cfg.n_scales, dtype=bool)
        w, h = base_size[0] * cfg.padding, base_size[1] * cfg.padding
        for i, f in enumerate(self.factors):
            sw, sh = w * scale * f, h * scale * f
            if min(sw, sh) < MIN_PATCH_SIDE:
                continue
            patch = resample_window(frame, center, (sw, sh),
                                    (cfg.model_size, cfg.model_size))
            feat = _hog.fhog(patch, cfg.hog_cell)
            cols[:, i] = feat.ravel() * self.window[i]
            valid[i] = True
        return np.fft.fft(cols, axis=1), valid
