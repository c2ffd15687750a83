"""One-dimensional phase-space toolkit.

Discretised wave functions, cross-spectral densities (CSD), Wigner
distribution functions (WDF), free-space shear, Husimi smoothing and the
decomposition of a non-negative phase-space density into minimum-uncertainty
Gaussians ("generalised rays").

Grid conventions
----------------
A field with ``N`` samples at spacing ``dr`` maps to a WDF with ``2N - 1``
rows: row ``s`` sits at ``r0 + s*dr/2`` and collects the sample pairs
``(i, j)`` with ``i + j = s``. Every CSD element lands in exactly one
row, which keeps the transform exactly invertible. The ``N`` columns are
``k_j = (j - N/2) * pi / (N dr)``.

The transform is ``W(r, k) = 1/(2 pi) * int dx C(r + x/2, r - x/2) exp(-i x k)``
with ``C(r1, r2) = <psi(r1) psi*(r2)>`` so that a plane wave ``exp(i k' r)``
peaks at ``k = +k'``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls


class PhaseSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    n: int
    dr: float
    r0: float = 0.0

    def __post_init__(self):
        if self.n < 2 or self.dr <= 0:
            raise PhaseSpaceError("grid needs n >= 2 and dr > 0")

    @property
    def r(self) -> np.ndarray:
        return self.r0 + self.dr * np.arange(self.n)

    @property
    def dk(self) -> float:
        return np.pi / (self.n * self.dr)

    @property
    def k(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dk

    @property
    def r_rows(self) -> np.ndarray:
        return self.r0 + 0.5 * self.dr * np.arange(2 * self.n - 1)

    @classmethod
    def centred(cls, n: int, dr: float) -> "Grid1D":
        return cls(n, dr, -0.5 * dr * (n - 1))


@dataclass(frozen=True)
class Field1D:
    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        v = np.asarray(self.values, complex)
        if v.shape != (self.grid.n,):
            raise PhaseSpaceError("field length does not match grid")
        if not np.all(np.isfinite(v)):
            raise PhaseSpaceError("field must be finite")
        object.__setattr__(self, "values", v)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dr)


@dataclass(frozen=True)
class CSDMatrix:
    c: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        c = np.asarray(self.c, complex)
        if c.shape != (self.grid.n, self.grid.n):
            raise PhaseSpaceError("CSD shape does not match grid")
        object.__setattr__(self, "c", c)

    def hermitian_error(self) -> float:
        scale = max(np.abs(self.c).max(), 1e-300)
        return float(np.abs(self.c - self.c.conj().T).max() / scale)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.c + self.c.conj().T)).min())


@dataclass(frozen=True)
class WDFGrid:
    w: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        w = np.asarray(self.w, float)
        if w.shape != (2 * self.grid.n - 1, self.grid.n):
            raise PhaseSpaceError("WDF shape does not match grid")
        object.__setattr__(self, "w", w)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r_rows

    @property
    def k(self) -> np.ndarray:
        return self.grid.k

    @property
    def total_power(self) -> float:
        return float(np.sum(intensity_marginal(self)) * self.grid.dr)


@dataclass(frozen=True)
class GaussianPhasePoint:
    mean_r: float
    mean_k: float
    sigma_r: float
    sigma_k: float
    weight: float = 1.0

    def __post_init__(self):
        if self.sigma_r <= 0 or self.sigma_k <= 0:
            raise PhaseSpaceError("widths must be positive")
        if self.sigma_r * self.sigma_k < 0.5 * (1 - 1e-12):
            raise PhaseSpaceError("violates sigma_r * sigma_k >= 1/2")
        if self.weight < 0:
            raise PhaseSpaceError("weight must be non-negative")

    @classmethod
    def minimum(cls, mean_r, mean_k, sigma_r, weight=1.0) -> "GaussianPhasePoint":
        return cls(mean_r, mean_k, sigma_r, 0.5 / sigma_r, weight)

    @property
    def is_minimum(self) -> bool:
        return abs(self.sigma_r * self.sigma_k - 0.5) < 1e-9

    def wdf(self, r, k):
        """Phase-space density of unit total power (times ``weight``)."""
        rr, kk = np.meshgrid(np.asarray(r) - self.mean_r, np.asarray(k) - self.mean_k,
                             indexing="ij")
        norm = 1.0 / (2 * np.pi * self.sigma_r * self.sigma_k)
        return self.weight * norm * np.exp(-0.5 * (rr / self.sigma_r) ** 2
                                           - 0.5 * (kk / self.sigma_k) ** 2)

    def field(self, grid: Grid1D) -> Field1D:
        """Wave function of a minimum-uncertainty ray with power ``weight``."""
        if not self.is_minimum:
            raise PhaseSpaceError("only minimum-uncertainty points have a pure-state field")
        r = grid.r - self.mean_r
        amp = (2 * np.pi * self.sigma_r**2) ** -0.25 * np.sqrt(self.weight)
        return Field1D(amp * np.exp(-r**2 / (4 * self.sigma_r**2) + 1j * self.mean_k * grid.r),
                       grid)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def gaussian_field(grid: Grid1D, sigma: float, centre=0.0, k0=0.0, chirp=0.0) -> Field1D:
    """Unit-power Gaussian ``exp(-(r-c)^2/(4 sigma^2) + i k0 r + i chirp (r-c)^2)``."""
    r = grid.r - centre
    amp = (2 * np.pi * sigma**2) ** -0.25
    return Field1D(amp * np.exp(-r**2 / (4 * sigma**2) + 1j * k0 * grid.r + 1j * chirp * r**2),
                   grid)


def plane_wave(grid: Grid1D, k0: float) -> Field1D:
    return Field1D(np.exp(1j * k0 * grid.r), grid)


def two_point_field(grid: Grid1D, separation: float, width: float) -> Field1D:
    """Two narrow in-phase Gaussian spots, a well-sampled stand-in for two point sources."""
    a = gaussian_field(grid, width, -separation / 2).values
    b = gaussian_field(grid, width, separation / 2).values
    return Field1D((a + b) / np.sqrt(2), grid)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def csd_from_ensemble(realizations) -> CSDMatrix:
    fields = list(realizations)
    if not fields:
        raise PhaseSpaceError("need at least one realization")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise PhaseSpaceError("realizations must share one grid")
    psi = np.stack([f.values for f in fields])
    c = psi.T @ psi.conj() / len(fields)
    return CSDMatrix(c, grid)


def _pair_tables(n: int):
    """Row ``s``, lag ``d = i - j`` and column index ``q`` for every CSD element."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    s = i + j
    d = i - j
    q = (d - (s % 2)) // 2 + n // 2
    return s, d, q


def wdf_from_csd(csd: CSDMatrix) -> WDFGrid:
    grid = csd.grid
    n = grid.n
    s, d, q = _pair_tables(n)
    # lags run over |d| < n; q in [0, n) for every element, parity fixed per row
    kern = np.zeros((2 * n - 1, n), complex)
    kern[s, q] = csd.c
    parity = (np.arange(2 * n - 1) % 2)[:, None]
    m = np.arange(n) - n // 2
    kj = grid.k
    # W[s, j] = dr/pi * sum_q K[s, q] exp(-i k_j (2 m_q + p_s) dr)
    phase_q = np.exp(-1j * np.outer(2 * m, kj) * grid.dr)
    w = (kern @ phase_q) * np.exp(-1j * parity * kj[None, :] * grid.dr) * (grid.dr / np.pi)
    return WDFGrid(w.real, grid)


def wdf_imaginary_residue(csd: CSDMatrix) -> float:
    """Relative size of the imaginary part discarded by :func:`wdf_from_csd`."""
    grid = csd.grid
    n = grid.n
    s, d, q = _pair_tables(n)
    kern = np.zeros((2 * n - 1, n), complex)
    kern[s, q] = csd.c
    parity = (np.arange(2 * n - 1) % 2)[:, None]
    m = np.arange(n) - n // 2
    w = (kern @ np.exp(-1j * np.outer(2 * m, grid.k) * grid.dr)) * \
        np.exp(-1j * parity * grid.k[None, :] * grid.dr)
    return float(np.abs(w.imag).max() / max(np.abs(w.real).max(), 1e-300))


def csd_from_wdf(wdf: WDFGrid) -> CSDMatrix:
    grid = wdf.grid
    n = grid.n
    s, d, q = _pair_tables(n)
    parity = (np.arange(2 * n - 1) % 2)[:, None]
    m = np.arange(n) - n // 2
    kj = grid.k
    tilted = wdf.w * np.exp(1j * parity * kj[None, :] * grid.dr)
    kern = (tilted @ np.exp(1j * np.outer(kj, 2 * m) * grid.dr)) * grid.dk
    return CSDMatrix(kern[s, q], grid)


def intensity_marginal(wdf: WDFGrid) -> np.ndarray:
    """``I(r) = int dk W`` at the field sample positions (the even rows)."""
    return wdf.w[0::2].sum(axis=1) * wdf.grid.dk


def propagate_free_space(wdf: WDFGrid, distance: float, k0: float) -> WDFGrid:
    """Paraxial free-space shear ``W(r, k) -> W(r - z k / k0, k)``.

    Only the even rows (the field sample positions) carry the marginal, so the
    shear is applied to each row family on its own lattice; linear
    interpolation with edge clamping.
    """
    if distance < 0:
        raise PhaseSpaceError("distance must be non-negative")
    if k0 <= 0:
        raise PhaseSpaceError("k0 must be positive")
    if distance == 0:
        return WDFGrid(wdf.w.copy(), wdf.grid)
    out = np.empty_like(wdf.w)
    r = wdf.r
    for start in (0, 1):
        rows = r[start::2]
        block = wdf.w[start::2]
        for j, kj in enumerate(wdf.k):
            out[start::2, j] = np.interp(rows - distance * kj / k0, rows, block[:, j])
    return WDFGrid(out, wdf.grid)


def husimi_smooth(wdf: WDFGrid, cell: GaussianPhasePoint) -> WDFGrid:
    """Convolve with a minimum-uncertainty Gaussian (sigma_r * sigma_k == 1/2).

    The convolution is carried out in the discrete (centre, lag) form of the
    CSD: a Gaussian taper ``exp(-x^2 / (8 sigma_r^2))`` over the lag is the
    k-convolution, and a Gaussian over all half-step row centres is the
    r-convolution. This equals ``<g|C|g> / 2 pi`` for the sampled coherent
    state ``g`` at every grid point, so any positive semidefinite CSD maps to
    a non-negative result up to rounding.
    """
    if not cell.is_minimum:
        raise PhaseSpaceError("Husimi cell must satisfy sigma_r * sigma_k == 1/2")
    grid = wdf.grid
    n, dr, sr = grid.n, grid.dr, cell.sigma_r
    s, d, q = _pair_tables(n)
    kern = np.zeros((2 * n - 1, n), complex)
    kern[s, q] = csd_from_wdf(wdf).c * np.exp(-(d * dr) ** 2 / (8 * sr**2))
    rows = grid.r_rows
    m = np.arange(n) - n // 2
    kj = grid.k
    lagged = kern @ np.exp(-1j * np.outer(2 * m, kj) * dr)
    out = np.zeros((2 * n - 1, n), complex)
    for p in (0, 1):
        src = rows[p::2]
        g = np.exp(-0.5 * ((rows[:, None] - src[None, :]) / sr) ** 2)
        out += (g @ lagged[p::2]) * np.exp(-1j * p * kj * dr)[None, :]
    norm = dr**2 / (2 * np.pi * np.sqrt(2 * np.pi) * sr)
    return WDFGrid(out.real * norm, grid)


def default_cell(grid: Grid1D) -> GaussianPhasePoint:
    """Minimum-uncertainty cell that is square in grid units."""
    sigma_r = np.sqrt(grid.dr / (2 * grid.dk))
    return GaussianPhasePoint.minimum(0.0, 0.0, sigma_r)


@dataclass(frozen=True)
class Decomposition:
    rays: tuple
    residual: float


def decompose_into_rays(wdf: WDFGrid, n_max: int, cell: GaussianPhasePoint | None = None,
                        tol: float = 1e-12) -> Decomposition:
    """Non-negative least-squares fit of minimum-uncertainty Gaussians.

    Candidate centres form a lattice spaced ``(sigma_r, sigma_k)`` over the
    grid, visited in row-major order; only cells where the input exceeds
    ``tol * max`` are kept, then the first ``n_max`` of those by input value
    (ties broken by lattice order). ``residual`` is the relative L2 error.
    Fitting uses the even (sample-position) rows.
    """
    w = wdf.w
    peak = np.abs(w).max()
    if w.min() < -1e-9 * max(peak, 1e-300):
        raise PhaseSpaceError("decomposition needs a non-negative (smoothed) WDF")
    if n_max < 1:
        raise PhaseSpaceError("n_max must be positive")
    cell = cell or default_cell(wdf.grid)
    r = wdf.r[0::2]
    k = wdf.k
    target = w[0::2]
    rc = np.arange(r[0], r[-1] + 0.5 * cell.sigma_r, cell.sigma_r)
    kc = np.arange(k[0], k[-1] + 0.5 * cell.sigma_k, cell.sigma_k)
    lr, lk = np.meshgrid(rc, kc, indexing="ij")
    lr, lk = lr.ravel(), lk.ravel()
    ir = np.clip(np.searchsorted(r, lr), 0, len(r) - 1)
    ik = np.clip(np.searchsorted(k, lk), 0, len(k) - 1)
    value = target[ir, ik]
    keep = np.flatnonzero(value > tol * max(peak, 1e-300))
    order = keep[np.argsort(-value[keep], kind="stable")][:n_max]
    order = np.sort(order)
    if order.size == 0:
        return Decomposition((), 0.0 if peak == 0 else 1.0)
    basis = np.stack([
        GaussianPhasePoint.minimum(lr[i], lk[i], cell.sigma_r).wdf(r, k).ravel()
        for i in order], axis=1)
    col_scale = np.linalg.norm(basis, axis=0)
    weights, _ = nnls(basis / col_scale, target.ravel(), maxiter=50 * basis.shape[1])
    weights = weights / col_scale
    fit = basis @ weights
    norm = np.linalg.norm(target)
    residual = float(np.linalg.norm(fit - target.ravel()) / norm) if norm > 0 else 0.0
    rays = tuple(GaussianPhasePoint.minimum(lr[i], lk[i], cell.sigma_r, wt)
                 for i, wt in zip(order, weights) if wt > 0)
    return Decomposition(rays, residual)


def uncertainty_product(field: Field1D):
    """``(sigma_r, sigma_k, sigma_r * sigma_k)`` from |psi|^2 and |FFT psi|^2."""
    psi = field.values
    p = np.abs(psi) ** 2
    total = p.sum()
    if total <= 0:
        raise PhaseSpaceError("zero field")
    r = field.grid.r
    p = p / total
    mr = np.sum(p * r)
    sr = np.sqrt(np.sum(p * (r - mr) ** 2))
    spec = np.fft.fft(psi)
    k = 2 * np.pi * np.fft.fftfreq(field.grid.n, field.grid.dr)
    q = np.abs(spec) ** 2
    q = q / q.sum()
    # unwrap about the spectral peak so fields centred near the Nyquist edge behave
    kc = k[np.argmax(q)]
    span = 2 * np.pi / field.grid.dr
    kk = (k - kc + span / 2) % span - span / 2 + kc
    mk = np.sum(q * kk)
    sk = np.sqrt(np.sum(q * (kk - mk) ** 2))
    return float(sr), float(sk), float(sr * sk)
