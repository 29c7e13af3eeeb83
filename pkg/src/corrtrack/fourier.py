"""Fourier-series conventions shared by the spectral learning code.

All periodic quantities live on a rectangular grid of Fourier coefficients
stored in numpy FFT layout (frequency k at index k mod Q).  Coefficients are
normalized so that

    f(t1, t2) = sum_k  coeffs[k1, k2] * exp(2i*pi*(k1*t1 + k2*t2))

with t in periods, i.e. ``coeffs = fft2(grid) / grid.size``.  The spatial
origin t = (0, 0) is the centre of the search region; grid index (i, j)
corresponds to t = (i/Q1, j/Q2) wrapped into [-1/2, 1/2).  A cell n of an
R-sized feature grid sits at t = (n + 0.5)/R - 0.5 (cell-centre convention).

With this normalization the sum of squared coefficient magnitudes equals the
mean square of the function over one period (Parseval), which is the l2 norm
used by the filter objective.
"""

from __future__ import annotations

import numpy as np


def coeffs_from_grid(grid: np.ndarray) -> np.ndarray:
    """Normalized Fourier coefficients of spatial samples (last two axes)."""
    n = grid.shape[-1] * grid.shape[-2]
    return np.fft.fft2(grid) / n


def grid_from_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Spatial samples on the coefficient grid (complex; last two axes)."""
    n = coeffs.shape[-1] * coeffs.shape[-2]
    return np.fft.ifft2(coeffs) * n


def real_grid_from_coeffs(coeffs: np.ndarray, imag_tol: float | None = None) -> np.ndarray:
    """Spatial samples of a conjugate-symmetric spectrum.

    When ``imag_tol`` is given, raises if the imaginary residue exceeds
    ``imag_tol`` relative to the spatial magnitude.
    """
    grid = grid_from_coeffs(coeffs)
    if imag_tol is not None:
        scale = max(np.abs(grid.real).max(), 1e-30)
        resid = np.abs(grid.imag).max() / scale
        if resid > imag_tol:
            raise ValueError(f"imaginary residue {resid:.3e} exceeds {imag_tol:.3e}")
    return np.ascontiguousarray(grid.real)


def freqs(q: int) -> np.ndarray:
    """Integer frequencies in FFT layout: 0, 1, ..., -q//2, ..., -1."""
    return np.fft.fftfreq(q, 1.0 / q).astype(np.int64)


def zero_nyquist(coeffs: np.ndarray) -> np.ndarray:
    """Zero the unpaired Nyquist bins of even-sized grids (in place).

    On an even grid the -Q/2 frequency has no +Q/2 partner, so it cannot be
    part of a real trigonometric polynomial evaluated off-grid; the band
    convention throughout this package excludes those bins.
    """
    q1, q2 = coeffs.shape[-2:]
    if q1 % 2 == 0:
        coeffs[..., q1 // 2, :] = 0.0
    if q2 % 2 == 0:
        coeffs[..., :, q2 // 2] = 0.0
    return coeffs


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto the conjugate-symmetric (real-signal) subspace.

    Iterative solvers on ill-conditioned spectra accumulate asymmetric
    round-off; this removes it exactly: coeffs[k] <- (coeffs[k] +
    conj(coeffs[-k])) / 2.
    """
    q1, q2 = coeffs.shape[-2:]
    rev = coeffs[..., (-np.arange(q1)) % q1, :][..., :, (-np.arange(q2)) % q2]
    return 0.5 * (coeffs + np.conj(rev))


def is_conjugate_symmetric(coeffs: np.ndarray, tol: float = 1e-10) -> bool:
    """True when coeffs[-k] == conj(coeffs[k]) within tol (real signal)."""
    q1, q2 = coeffs.shape[-2:]
    rev = coeffs[..., (-np.arange(q1)) % q1, :][..., :, (-np.arange(q2)) % q2]
    scale = max(np.abs(coeffs).max(), 1e-30)
    return bool(np.abs(rev - np.conj(coeffs)).max() <= tol * scale)


def wrap_position(idx, q: int):
    """Map a grid index to a signed offset in cells, in [-q/2, q/2)."""
    return (np.asarray(idx) + q // 2) % q - q // 2


def shift_coeffs(coeffs: np.ndarray, shift_cells: tuple[float, float]) -> np.ndarray:
    """Translate the represented function by (d1, d2) grid cells.

    Positive shift moves the function content toward larger indices, so a
    response peaked at the origin becomes peaked at ``shift_cells``.
    """
    q1, q2 = coeffs.shape[-2:]
    k1 = freqs(q1) / q1
    k2 = freqs(q2) / q2
    ph1 = np.exp(-2j * np.pi * k1 * shift_cells[0])
    ph2 = np.exp(-2j * np.pi * k2 * shift_cells[1])
    return coeffs * ph1[:, None] * ph2[None, :]


def evaluate_at(coeffs: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric polynomial on the outer grid t1 x t2.

    Direct summation over all coefficients; meant for oracles and for the
    sub-cell refinement of small score grids, not for bulk transforms.
    """
    q1, q2 = coeffs.shape[-2:]
    e1 = np.exp(2j * np.pi * np.outer(np.asarray(t1, dtype=float), freqs(q1)))
    e2 = np.exp(2j * np.pi * np.outer(freqs(q2), np.asarray(t2, dtype=float)))
    return e1 @ coeffs @ e2
