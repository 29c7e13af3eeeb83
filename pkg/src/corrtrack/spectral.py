"""Continuous-domain multi-channel correlation filter learning.

Feature channels of different resolutions are posed as periodic continuous
functions through per-resolution interpolation kernels and represented by
Fourier coefficients on one common grid (the finest feature grid, see
:mod:`corrtrack.fourier` for conventions).  A filter is learned by minimizing
a weighted regularized least-squares objective over the stored samples

    sum_i  w_i * || sum_j H_j * Z_ij  -  Y ||^2  +  sum_j || P (*) H_j ||^2

where Z_ij are interpolated sample spectra, Y is the desired response
spectrum, and P (*) H is circular convolution of the coefficient grid with a
small penalty spectrum (a spatial multiplication by the penalty surface).
The normal equations are solved matrix-free with conjugate gradients.

Filters and sample spectra are complex arrays of shape (channels, Q1, Q2);
all arrays are conjugate-symmetric so every spatial quantity is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError
from .fourier import freqs, real_grid_from_coeffs, symmetrize, zero_nyquist

CUBIC_A = -0.5  # sharpness of the cubic interpolation kernel (Catmull-Rom)


# ---------------------------------------------------------------------------
# label spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelSpectrum:
    """Fourier coefficients of the desired response, peaked at the origin."""

    coeffs: np.ndarray          # (Q1, Q2) complex, conjugate-symmetric
    sigma_cells: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape


def gaussian_label(grid_shape: tuple[int, int], target_cells: tuple[float, float],
                   sigma_factor: float = 0.083) -> LabelSpectrum:
    """Desired response: periodic 2-D Gaussian centred at the origin.

    The standard deviation is ``sigma_factor * sqrt(q1*q2)`` cells of the
    common grid, where (q1, q2) is the target extent in cells.  Coefficients
    are the exact Fourier coefficients of the periodized unit-peak Gaussian,
    truncated to the grid band.
    """
    q1, q2 = grid_shape
    if q1 < 3 or q2 < 3:
        raise InvalidInputError(f"label grid too small: {grid_shape}")
    sigma_cells = sigma_factor * float(np.sqrt(target_cells[0] * target_cells[1]))
    coeffs = np.outer(_gaussian_coeffs_1d(q1, sigma_cells / q1),
                      _gaussian_coeffs_1d(q2, sigma_cells / q2)).astype(np.complex128)
    return LabelSpectrum(zero_nyquist(coeffs), sigma_cells)


def _gaussian_coeffs_1d(q: int, s: float) -> np.ndarray:
    # Coefficients of sum_m exp(-(t-m)^2 / (2 s^2)) with period 1 (Poisson).
    k = freqs(q)
    return s * np.sqrt(2.0 * np.pi) * np.exp(-2.0 * (np.pi * s * k) ** 2)


# ---------------------------------------------------------------------------
# interpolation kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterpKernel:
    """Spectrum mapping one feature resolution onto the common grid."""

    resolution: tuple[int, int]
    coeffs: np.ndarray          # (Q1, Q2) complex


def interp_kernel(resolution: tuple[int, int], common: tuple[int, int]) -> InterpKernel:
    """Fourier coefficients of the periodic cubic interpolation kernel.

    Cells of an R-sized grid are centred at t = (n + 0.5)/R - 1/2, so the
    kernel carries the half-cell (and half-period) phase that aligns feature
    grids of different strides on the common domain.  Coefficients include
    the 1/(R1*R2) factor, so a sample spectrum is the channel's plain DFT
    (periodically extended) times the kernel.  For even common grids the
    unpaired Nyquist bins are zeroed to keep spectra exactly
    conjugate-symmetric.
    """
    r1, r2 = resolution
    if r1 < 2 or r2 < 2:
        raise InvalidInputError(f"interpolation needs at least 2x2 cells, got {resolution}")
    k = np.outer(_interp_coeffs_1d(common[0], r1), _interp_coeffs_1d(common[1], r2))
    return InterpKernel((r1, r2), k)


def _interp_coeffs_1d(q: int, r: int) -> np.ndarray:
    k = freqs(q)
    vals = _cubic_spectrum(k / r) * np.exp(-2j * np.pi * k * (0.5 / r - 0.5)) / r
    if q % 2 == 0:
        vals[q // 2] = 0.0
    return vals


def _cubic_spectrum(nu: np.ndarray) -> np.ndarray:
    """Continuous Fourier transform of the unit-spaced cubic kernel.

    Evaluated by fixed-order Gauss-Legendre quadrature on the two support
    intervals; exact to machine precision for the frequencies used here.
    """
    a = CUBIC_A
    nodes, wts = np.polynomial.legendre.leggauss(48)
    out = np.zeros_like(np.asarray(nu, dtype=float))
    for lo, hi, poly in (
        (0.0, 1.0, lambda t: (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1.0),
        (1.0, 2.0, lambda t: a * (t ** 3 - 5 * t ** 2 + 8 * t - 4.0)),
    ):
        t = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * wts
        # kernel is even: integral of b(t) cos(2 pi nu t) over both half-lines
        out += 2.0 * np.einsum('g,vg->v', w * poly(t),
                               np.cos(2.0 * np.pi * np.multiply.outer(np.asarray(nu, float), t)))
    return out


# ---------------------------------------------------------------------------
# penalty spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltySpectrum:
    """Truncated spectrum of the spatial penalty surface.

    The surface is ``0.1 + 3 (i/q1)^2 + 3 (j/q2)^2`` with (i, j) in cells
    from the region centre and (q1, q2) the target extent in cells.  The
    quadratic is additively separable, so only the DC bin and the two
    frequency axes carry energy; ``kernel`` stores the centred
    (bandwidth x bandwidth) block with DC at kernel[b//2, b//2].

    ``energy_scale`` is the amplitude the regularization operator applies
    on top of the surface.  The baseline framework builds its penalty from
    grid-normalized window coefficients while samples use plain DFTs; in
    the mean-square convention used here that balance corresponds to
    scaling the surface by one over the grid cell count.
    """

    kernel: np.ndarray                 # (b, b) real, centred layout
    target_cells: tuple[float, float]
    region_cells: tuple[int, int]
    energy_scale: float = 1.0
    _taps: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        b = self.kernel.shape[0]
        h = b // 2
        taps = [(d1 - h, d2 - h, self.kernel[d1, d2] * self.energy_scale)
                for d1 in range(b) for d2 in range(b)
                if self.kernel[d1, d2] != 0.0]
        object.__setattr__(self, '_taps', taps)

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Regularization operator: scaled circular convolution with the
        penalty coefficients."""
        out = np.zeros_like(h)
        for d1, d2, v in self._taps:
            out += v * np.roll(h, (d1, d2), axis=(-2, -1))
        return out

    def apply_adjoint(self, h: np.ndarray) -> np.ndarray:
        out = np.zeros_like(h)
        for d1, d2, v in self._taps:
            out += np.conj(v) * np.roll(h, (-d1, -d2), axis=(-2, -1))
        return out

    def apply_gram(self, h: np.ndarray) -> np.ndarray:
        return self.apply_adjoint(self.apply(h))

    def to_grid(self, shape: tuple[int, int]) -> np.ndarray:
        """Embed the centred surface block into a full FFT-layout grid
        (unscaled: coefficients of the penalty surface itself)."""
        b = self.kernel.shape[0]
        h = b // 2
        full = np.zeros(shape, dtype=np.complex128)
        for d1 in range(b):
            for d2 in range(b):
                if self.kernel[d1, d2] != 0.0:
                    full[(d1 - h) % shape[0], (d2 - h) % shape[1]] = self.kernel[d1, d2]
        return full

    def spatial(self, shape: tuple[int, int]) -> np.ndarray:
        """Reconstruction of the truncated penalty surface on a grid."""
        return real_grid_from_coeffs(self.to_grid(shape))


def penalty_spectrum(target_cells: tuple[float, float], region_cells: tuple[int, int],
                     bandwidth: int = 5, energy_scale: float | None = None) -> PenaltySpectrum:
    """Truncated Fourier coefficients of the quadratic spatial penalty.

    ``energy_scale`` defaults to 1/(Q1*Q2), the baseline framework's
    effective regularization amplitude (see PenaltySpectrum).
    """
    q1, q2 = target_cells
    if q1 <= 0 or q2 <= 0:
        raise InvalidInputError(f"target extent must be positive, got {target_cells}")
    if bandwidth < 3 or bandwidth % 2 == 0:
        raise InvalidInputError(f"bandwidth must be odd and >= 3, got {bandwidth}")
    if energy_scale is None:
        energy_scale = 1.0 / (region_cells[0] * region_cells[1])
    c1 = 3.0 * (region_cells[0] / q1) ** 2
    c2 = 3.0 * (region_cells[1] / q2) ** 2
    h = bandwidth // 2
    kernel = np.zeros((bandwidth, bandwidth))
    # exact series of t^2 on [-1/2, 1/2): mean 1/12, k-th coefficient (-1)^k/(2 pi^2 k^2)
    kernel[h, h] = 0.1 + (c1 + c2) / 12.0
    for k in range(1, h + 1):
        v = (-1.0) ** k / (2.0 * np.pi ** 2 * k ** 2)
        kernel[h + k, h] = kernel[h - k, h] = c1 * v
        kernel[h, h + k] = kernel[h, h - k] = c2 * v
    return PenaltySpectrum(kernel, (float(q1), float(q2)), tuple(region_cells),
                           energy_scale)


# ---------------------------------------------------------------------------
# sample projection and memory
# ---------------------------------------------------------------------------

def project_sample(stack, kernels: dict) -> np.ndarray:
    """Interpolate a weighted feature stack onto the common grid.

    Each channel's DFT is extended periodically over the common frequency
    band and multiplied by its resolution's kernel spectrum, producing one
    (channels, Q1, Q2) sample spectrum.
    """
    blocks = []
    for block in stack.blocks:
        res = (block.channels.shape[1], block.channels.shape[2])
        kern = kernels.get(res)
        if kern is None:
            raise ConfigError(f"no interpolation kernel for resolution {res} "
                              f"(block '{block.name}')")
        q1, q2 = kern.coeffs.shape
        xhat = np.fft.fft2(block.channels)
        i1 = freqs(q1) % res[0]
        i2 = freqs(q2) % res[1]
        blocks.append(xhat[:, i1[:, None], i2[None, :]] * kern.coeffs)
    return np.concatenate(blocks, axis=0)


@dataclass(frozen=True)
class SampleMemory:
    """Weighted set of training sample spectra (the rows of the data term)."""

    samples: tuple = ()
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    capacity: int = 50
    _stacked: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.samples)

    def stacked(self) -> np.ndarray:
        if self._stacked is None:
            object.__setattr__(self, '_stacked', np.stack(self.samples, axis=0))
        return self._stacked


def update_samples(memory: SampleMemory, sample: np.ndarray, gamma: float) -> SampleMemory:
    """Insert a sample with learning-rate weight, decaying older weights.

    Existing weights are scaled by (1 - gamma) and the new sample enters
    with weight gamma (weight 1 into an empty memory); weights are then
    renormalized to sum to one.  Beyond capacity the lowest-weight (oldest)
    sample is evicted.  gamma = 0 leaves the memory unchanged.
    """
    if len(memory) and sample.shape != memory.samples[0].shape:
        raise InvalidInputError(f"sample shape {sample.shape} does not match "
                                f"memory {memory.samples[0].shape}")
    if len(memory) == 0:
        return SampleMemory((sample,), np.ones(1), memory.capacity)
    if gamma == 0.0:
        return memory
    samples = list(memory.samples) + [sample]
    weights = np.append(memory.weights * (1.0 - gamma), gamma)
    if len(samples) > memory.capacity:
        drop = int(np.argmin(weights))
        del samples[drop]
        weights = np.delete(weights, drop)
    weights = weights / weights.sum()
    return SampleMemory(tuple(samples), weights, memory.capacity)


# ---------------------------------------------------------------------------
# normal equations, conjugate gradients, filter updates
# ---------------------------------------------------------------------------

def response_spectrum(sample: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Spectrum of the filter response on one sample: sum_j H_j * Z_j."""
    return np.einsum('jpq,jpq->pq', sample, filt)


def normal_operator(memory: SampleMemory, penalty: PenaltySpectrum):
    """Matrix-free left-hand side of the normal equations.

    Returns a callable applying  H -> B^H W B H + P^H P H  without forming
    B; self-adjoint and positive semidefinite under the real inner product.
    """
    if len(memory) == 0:
        raise InvalidInputError("sample memory is empty")
    z = memory.stacked()
    wconj = memory.weights[:, None, None, None] * np.conj(z)

    def apply(h: np.ndarray) -> np.ndarray:
        resp = np.einsum('mjpq,jpq->mpq', z, h)
        out = np.einsum('mpq,mjpq->jpq', resp, wconj)
        out += penalty.apply_gram(h)
        return out

    return apply


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    breakdown: bool = False


def cg_solve(op, rhs: np.ndarray, x0: np.ndarray, iters: int,
             rtol: float = 1e-12) -> CGResult:
    """Conjugate-gradient iterate after at most ``iters`` steps from ``x0``.

    Inner products are real parts of complex dot products, which keeps
    conjugate-symmetric iterates conjugate-symmetric.  Iteration stops
    early once the residual falls below ``rtol`` relative to the initial
    one (continuing past the round-off floor makes iterates blow up along
    near-null directions of singular systems).  On a zero-curvature
    direction the current iterate is returned with ``breakdown`` set.
    """
    if iters < 1:
        raise InvalidInputError("iters must be >= 1")
    x = x0.copy()
    r = rhs - op(x)
    rs = _inner(r, r)
    if rs == 0.0:
        return CGResult(x, 0, 0.0)
    floor = rs * rtol * rtol
    p = r.copy()
    for it in range(iters):
        ap = op(p)
        pap = _inner(p, ap)
        if pap <= 0.0 or not np.isfinite(pap):
            return CGResult(x, it, float(np.sqrt(rs)), breakdown=True)
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = _inner(r, r)
        if rs_new <= floor:
            return CGResult(x, it + 1, float(np.sqrt(rs_new)))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CGResult(x, iters, float(np.sqrt(rs)))


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b).real)


@dataclass
class LearnResult:
    filter: np.ndarray
    objective: float
    residual_norm: float
    iterations: int
    breakdown: bool


def learn(memory: SampleMemory, label: LabelSpectrum, penalty: PenaltySpectrum,
          warm_start: np.ndarray, iters: int) -> LearnResult:
    """Solve the weighted normal equations for the filter by CG.

    The returned filter is re-projected onto the conjugate-symmetric
    subspace (the minimizer is symmetric; CG round-off is not).
    """
    op = normal_operator(memory, penalty)
    z = memory.stacked()
    rhs = np.einsum('m,mjpq->jpq', memory.weights, np.conj(z)) * label.coeffs[None]
    res = cg_solve(op, rhs, warm_start, iters)
    filt = symmetrize(res.x)
    obj = objective_value(memory, label, penalty, filt)
    return LearnResult(filt, obj, res.residual_norm, res.iterations, res.breakdown)


def objective_value(memory: SampleMemory, label: LabelSpectrum,
                    penalty: PenaltySpectrum, filt: np.ndarray) -> float:
    """Value of the regularized least-squares objective at ``filt``."""
    total = 0.0
    for w, z in zip(memory.weights, memory.samples):
        resid = response_spectrum(z, filt) - label.coeffs
        total += float(w) * float(np.vdot(resid, resid).real)
    ph = penalty.apply(filt)
    total += float(np.vdot(ph, ph).real)
    return total


def update_filter(prior: np.ndarray, current: np.ndarray, gamma: float) -> np.ndarray:
    """Exponential moving average of filters: (1-gamma)*prior + gamma*current."""
    if prior.shape != current.shape:
        raise InvalidInputError(f"filter shapes differ: {prior.shape} vs {current.shape}")
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInputError(f"learning rate must be in [0, 1], got {gamma}")
    if gamma == 0.0:
        return prior.copy()
    if gamma == 1.0:
        return current.copy()
    return (1.0 - gamma) * prior + gamma * current
