"""Dense 31-channel HOG features on a cell grid.

The classic formulation: 18 contrast-sensitive orientation channels, 9
contrast-insensitive ones, and 4 normalization-energy (texture) channels.
Pixels vote for one of 18 signed orientations and distribute their gradient
magnitude bilinearly over the four nearest cells; cell histograms are then
normalized against the four neighbouring 2x2 energy windows with truncation.
"""

from __future__ import annotations

import numpy as np

TRUNCATION = 0.2
_N_ORIENT = 9
_EPS = 1e-10


def fhog(image: np.ndarray, cell: int) -> np.ndarray:
    """31-channel HOG of an (H, W, 3) image; returns (31, H/cell, W/cell)."""
    h, w = image.shape[:2]
    hc, wc = h // cell, w // cell

    gy, gx, mag = _strongest_gradient(image)

    # signed orientation bin via the largest projection on 18 half-turn axes
    angles = np.arange(_N_ORIENT) * np.pi / _N_ORIENT
    proj = (np.cos(angles)[:, None, None] * gx + np.sin(angles)[:, None, None] * gy)
    best = np.argmax(np.abs(proj), axis=0)
    sign_neg = np.take_along_axis(proj, best[None], axis=0)[0] < 0
    bins = best + _N_ORIENT * sign_neg

    hist = _bilinear_vote(bins, mag, cell, hc, wc)

    folded = hist[:_N_ORIENT] + hist[_N_ORIENT:]
    energy = np.sum(folded ** 2, axis=0)
    norms = _block_norms(energy)

    sens = np.minimum(hist[:, None] / norms[None], TRUNCATION)
    insens = np.minimum(folded[:, None] / norms[None], TRUNCATION)
    out = np.concatenate([
        0.5 * sens.sum(axis=1),
        0.5 * insens.sum(axis=1),
        (1.0 / np.sqrt(2.0 * _N_ORIENT)) * sens.sum(axis=0),
    ], axis=0)
    return out


def _strongest_gradient(image: np.ndarray):
    """Per-pixel gradient of the colour channel with the largest magnitude."""
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    mag2 = gx ** 2 + gy ** 2
    pick = np.argmax(mag2, axis=2)
    take = lambda a: np.take_along_axis(a, pick[:, :, None], axis=2)[:, :, 0]
    return take(gy), take(gx), np.sqrt(take(mag2))


def _bilinear_vote(bins: np.ndarray, mag: np.ndarray, cell: int, hc: int, wc: int):
    """Scatter magnitudes into (18, hc, wc) with bilinear cell weights."""
    h, w = mag.shape
    cy = (np.arange(h) + 0.5) / cell - 0.5
    cx = (np.arange(w) + 0.5) / cell - 0.5
    y0 = np.floor(cy).astype(np.int64)
    x0 = np.floor(cx).astype(np.int64)
    fy = (cy - y0)[:, None]
    fx = (cx - x0)[None, :]

    hist = np.zeros(2 * _N_ORIENT * hc * wc)
    for oy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        for ox, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            yy = np.broadcast_to(oy[:, None], (h, w))
            xx = np.broadcast_to(ox[None, :], (h, w))
            ok = (yy >= 0) & (yy < hc) & (xx >= 0) & (xx < wc)
            votes = (mag * wy * wx)[ok]
            idx = bins[ok] * (hc * wc) + yy[ok] * wc + xx[ok]
            hist += np.bincount(idx, votes, minlength=hist.size)
    return hist.reshape(2 * _N_ORIENT, hc, wc)


def _block_norms(energy: np.ndarray) -> np.ndarray:
    """Four 2x2-window normalizers per cell, edge-replicated at borders."""
    e = np.pad(energy, 1, mode="edge")
    corner = e[:-1, :-1] + e[:-1, 1:] + e[1:, :-1] + e[1:, 1:]
    stacked = np.stack([corner[:-1, :-1], corner[:-1, 1:],
                        corner[1:, :-1], corner[1:, 1:]], axis=0)
    return np.sqrt(stacked + _EPS)
