"""Wavelength sampling, spectra, refractive indices and Mueller algebra.

Wavelengths are in nanometres throughout; Stokes vectors carry spectral
radiance in their first component. All functions accept numpy arrays and
broadcast over leading dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

LAMBDA_MIN = 380.0
LAMBDA_MAX = 700.0
LAMBDA_RANGE = LAMBDA_MAX - LAMBDA_MIN

# Planck's law constants (SI)
_H = 6.62607015e-34
_C = 2.99792458e8
_KB = 1.380649e-23

XYZ_TO_SRGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])


class SpectralError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def read_columns(path) -> np.ndarray:
    """Read a whitespace-delimited numeric table with ``#`` comments."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(x) for x in line.split()])
        except ValueError as exc:
            raise SpectralError(f"{path}:{lineno}: cannot parse {line!r}") from exc
    if not rows:
        raise SpectralError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise SpectralError(f"{path}: ragged columns")
    return np.asarray(rows)


@dataclass(frozen=True)
class Spectrum:
    """A scalar function of wavelength.

    ``kind`` is one of ``constant``, ``blackbody`` or ``tabulated``. Black
    bodies are normalised to a peak of one over the visible range so that the
    emitter's scale parameter alone sets the radiometric level.
    """

    kind: str
    value: float = 1.0
    temperature: float = 0.0
    wavelengths: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "blackbody", "tabulated"):
            raise SpectralError(f"unknown spectrum kind {self.kind!r}")
        if self.kind == "blackbody" and self.temperature <= 0:
            raise SpectralError("blackbody temperature must be positive")
        if self.kind == "tabulated":
            wl = np.asarray(self.wavelengths, float)
            if wl.size == 0 or wl.size != len(self.values):
                raise SpectralError("tabulated spectrum needs matching wavelength/value arrays")
            if np.any(np.diff(wl) <= 0):
                raise SpectralError("tabulated wavelengths must be strictly increasing")

    @classmethod
    def constant(cls, value: float = 1.0) -> "Spectrum":
        return cls("constant", value=float(value))

    @classmethod
    def blackbody(cls, temperature: float) -> "Spectrum":
        return cls("blackbody", temperature=float(temperature))

    @classmethod
    def tabulated(cls, wavelengths, values) -> "Spectrum":
        return cls("tabulated", wavelengths=tuple(map(float, wavelengths)),
                   values=tuple(map(float, values)))

    @classmethod
    def from_file(cls, path) -> "Spectrum":
        table = read_columns(path)
        return cls.tabulated(table[:, 0], table[:, 1])

    def __call__(self, wavelength):
        wl = np.asarray(wavelength, float)
        if self.kind == "constant":
            return np.full(wl.shape, self.value)
        if self.kind == "blackbody":
            return planck(wl, self.temperature) / _planck_peak(self.temperature)
        return np.interp(wl, self.wavelengths, self.values)

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "tabulated":
            return self.wavelengths[0], self.wavelengths[-1]
        return LAMBDA_MIN, LAMBDA_MAX


def planck(wavelength_nm, temperature):
    """Black-body spectral radiance in W sr^-1 m^-2 nm^-1."""
    lam = np.asarray(wavelength_nm, float) * 1e-9
    with np.errstate(over="ignore"):
        b = 2 * _H * _C**2 / lam**5 / np.expm1(_H * _C / (lam * _KB * temperature))
    return b * 1e-9


@lru_cache(maxsize=64)
def _planck_peak(temperature: float) -> float:
    wl = np.linspace(LAMBDA_MIN, LAMBDA_MAX, 641)
    return float(planck(wl, temperature).max())


# ---------------------------------------------------------------------------
# refractive indices
# ---------------------------------------------------------------------------

def cauchy_ior(wavelength_nm, a: float, b: float):
    """Cauchy dispersion ``a + b / lambda^2`` with ``b`` in um^2."""
    lam_um = np.asarray(wavelength_nm, float) * 1e-3
    return a + b / lam_um**2


@dataclass(frozen=True)
class RefractiveIndex:
    kind: str
    a: float = 1.0
    b: float = 0.0
    wavelengths: tuple = ()
    eta: tuple = ()
    kappa: tuple = ()

    def __post_init__(self):
        if self.kind == "cauchy":
            if self.b < 0:
                raise SpectralError("Cauchy B must be non-negative")
            if cauchy_ior(LAMBDA_MAX, self.a, self.b) <= 0:
                raise SpectralError("refractive index must be positive")
        elif self.kind == "tabulated":
            if len(self.wavelengths) == 0 or not (
                    len(self.wavelengths) == len(self.eta) == len(self.kappa)):
                raise SpectralError("tabulated IOR needs matching columns")
            if min(self.eta) <= 0:
                raise SpectralError("real part of IOR must be positive")
        else:
            raise SpectralError(f"unknown IOR kind {self.kind!r}")

    @classmethod
    def cauchy(cls, a: float, b: float = 0.0) -> "RefractiveIndex":
        return cls("cauchy", a=float(a), b=float(b))

    @classmethod
    def constant(cls, eta: float, kappa: float = 0.0) -> "RefractiveIndex":
        if kappa == 0.0:
            return cls.cauchy(eta, 0.0)
        return cls.tabulated([LAMBDA_MIN, LAMBDA_MAX], [eta, eta], [kappa, kappa])

    @classmethod
    def tabulated(cls, wavelengths, eta, kappa=None) -> "RefractiveIndex":
        kappa = np.zeros(len(eta)) if kappa is None else kappa
        return cls("tabulated", wavelengths=tuple(map(float, wavelengths)),
                   eta=tuple(map(float, eta)), kappa=tuple(map(float, kappa)))

    @classmethod
    def from_file(cls, path) -> "RefractiveIndex":
        table = read_columns(path)
        kappa = table[:, 2] if table.shape[1] > 2 else None
        return cls.tabulated(table[:, 0], table[:, 1], kappa)

    @property
    def dispersive(self) -> bool:
        if self.kind == "cauchy":
            return self.b > 0
        return len(set(self.eta)) > 1 or len(set(self.kappa)) > 1

    @property
    def is_conductor(self) -> bool:
        return self.kind == "tabulated" and max(self.kappa) > 0

    def __call__(self, wavelength_nm):
        """Complex index ``eta + i kappa`` (linear interpolation when tabulated)."""
        wl = np.asarray(wavelength_nm, float)
        if self.kind == "cauchy":
            return cauchy_ior(wl, self.a, self.b) + 0j
        eta = np.interp(wl, self.wavelengths, self.eta)
        kappa = np.interp(wl, self.wavelengths, self.kappa)
        return eta + 1j * kappa


# ---------------------------------------------------------------------------
# Fresnel / Mueller
# ---------------------------------------------------------------------------

def mueller_from_amplitudes(a_s, a_p, scale=1.0):
    """Mueller matrix of a non-depolarising diagonal Jones matrix diag(a_s, a_p).

    Stokes components are referenced to the s axis: s1 = I_s - I_p.
    """
    a_s = np.asarray(a_s, complex)
    a_p = np.asarray(a_p, complex)
    ss = np.abs(a_s) ** 2
    pp = np.abs(a_p) ** 2
    cross = a_s * np.conj(a_p)
    m = np.zeros(np.broadcast(a_s, a_p).shape + (4, 4))
    m[..., 0, 0] = 0.5 * (ss + pp)
    m[..., 0, 1] = m[..., 1, 0] = 0.5 * (ss - pp)
    m[..., 1, 1] = 0.5 * (ss + pp)
    m[..., 2, 2] = m[..., 3, 3] = cross.real
    m[..., 2, 3] = cross.imag
    m[..., 3, 2] = -cross.imag
    return m * np.asarray(scale)[..., None, None]


def fresnel_amplitudes(cos_i, eta_i, eta_t):
    """Return ``(r_s, r_p, t_s, t_p, cos_t)`` for incidence from medium ``eta_i``."""
    cos_i = np.clip(np.asarray(cos_i, float), 0.0, 1.0)
    eta_i = np.asarray(eta_i, complex)
    eta_t = np.asarray(eta_t, complex)
    sin2_i = 1.0 - cos_i**2
    cos_t = np.sqrt(1.0 - (eta_i / eta_t) ** 2 * sin2_i + 0j)
    # choose the decaying branch inside absorbers / beyond critical angle
    cos_t = np.where(cos_t.imag < 0, -cos_t, cos_t)
    ni_ci = eta_i * cos_i
    nt_ct = eta_t * cos_t
    nt_ci = eta_t * cos_i
    ni_ct = eta_i * cos_t
    with np.errstate(invalid="ignore", divide="ignore"):
        r_s = (ni_ci - nt_ct) / (ni_ci + nt_ct)
        r_p = (nt_ci - ni_ct) / (nt_ci + ni_ct)
        t_s = 2 * ni_ci / (ni_ci + nt_ct)
        t_p = 2 * ni_ci / (nt_ci + ni_ct)
    return r_s, r_p, t_s, t_p, cos_t


def fresnel_mueller(cos_i, eta_i, eta_t):
    """Fresnel reflection and transmission Mueller matrices in the s/p frame.

    Returns ``(reflect, transmit, cos_t, tir)``. ``transmit`` carries the
    power factor Re(eta_t cos_t)/(eta_i cos_i) so that reflect[0,0] +
    transmit[0,0] == 1 for lossless media. Under total internal reflection
    ``transmit`` is zero and ``tir`` is True.
    """
    r_s, r_p, t_s, t_p, cos_t = fresnel_amplitudes(cos_i, eta_i, eta_t)
    cos_i = np.asarray(cos_i, float)
    eta_i = np.asarray(eta_i, complex)
    eta_t = np.asarray(eta_t, complex)
    reflect = mueller_from_amplitudes(r_s, r_p)
    lossless = np.abs(np.imag(eta_t)) == 0
    tir = lossless & (np.abs(cos_t.real) < 1e-12) & (cos_i > 0) & \
        (np.real(eta_t) < np.real(eta_i))
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.real(eta_t * cos_t) / np.real(eta_i * cos_i)
    factor = np.where(tir | ~np.isfinite(factor), 0.0, factor)
    transmit = mueller_from_amplitudes(t_s, t_p, factor)
    transmit = np.where(np.asarray(tir)[..., None, None], 0.0, transmit)
    transmit = np.nan_to_num(transmit)
    return reflect, transmit, cos_t, tir


def rotation_mueller(phi):
    """Rotate the Stokes reference frame by ``phi`` radians about the ray."""
    phi = np.asarray(phi, float)
    c, s = np.cos(2 * phi), np.sin(2 * phi)
    m = np.zeros(phi.shape + (4, 4))
    m[..., 0, 0] = 1.0
    m[..., 3, 3] = 1.0
    m[..., 1, 1] = c
    m[..., 1, 2] = s
    m[..., 2, 1] = -s
    m[..., 2, 2] = c
    return m


def depolarizer(value):
    value = np.asarray(value, float)
    m = np.zeros(value.shape + (4, 4))
    m[..., 0, 0] = value
    return m


def is_physical_stokes(s, tol=1e-9):
    s = np.asarray(s, float)
    pol = np.sqrt(np.sum(s[..., 1:] ** 2, axis=-1))
    return (s[..., 0] >= -tol) & (pol <= s[..., 0] * (1 + tol) + tol)


def extremal_stokes() -> np.ndarray:
    """Unpolarised light plus the six fully polarised basis states."""
    return np.array([
        [1, 0, 0, 0],
        [1, 1, 0, 0], [1, -1, 0, 0],
        [1, 0, 1, 0], [1, 0, -1, 0],
        [1, 0, 0, 1], [1, 0, 0, -1],
    ], float)


# ---------------------------------------------------------------------------
# wavelength sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WavelengthSet:
    hero: float
    hero_pdf: float
    secondaries: tuple = ()
    secondary_pdfs: tuple = ()
    emission_pdf_of_hero: float = 0.0

    def __post_init__(self):
        lams = (self.hero,) + tuple(self.secondaries)
        if any(not (LAMBDA_MIN <= x <= LAMBDA_MAX) for x in lams):
            raise SpectralError(f"wavelengths outside visible range: {lams}")
        if self.hero_pdf <= 0 or any(p <= 0 for p in self.secondary_pdfs):
            raise SpectralError("wavelength pdfs must be positive")
        if len(self.secondaries) > 3 or len(self.secondaries) != len(self.secondary_pdfs):
            raise SpectralError("at most 3 secondary wavelengths, one pdf each")

    @property
    def wavelengths(self) -> np.ndarray:
        return np.array((self.hero,) + tuple(self.secondaries))

    def drop_secondaries(self) -> "WavelengthSet":
        return WavelengthSet(self.hero, self.hero_pdf)


def sample_hero_wavelength(u):
    u = np.asarray(u, float)
    return LAMBDA_MIN + LAMBDA_RANGE * u, np.full(u.shape, 1.0 / LAMBDA_RANGE)


@dataclass
class EmissionSampler:
    """Piecewise-constant inverse-CDF sampler over 1 nm bins centred on integer nm."""

    spectrum: Spectrum
    edges: np.ndarray = field(init=False)
    pdf_bins: np.ndarray = field(init=False)
    cdf: np.ndarray = field(init=False)

    def __post_init__(self):
        centres = np.arange(LAMBDA_MIN, LAMBDA_MAX + 1.0)
        edges = np.concatenate([[LAMBDA_MIN], centres[:-1] + 0.5, [LAMBDA_MAX]])
        widths = np.diff(edges)
        weights = np.clip(self.spectrum(centres), 0.0, None) * widths
        total = weights.sum()
        if not np.isfinite(total) or total <= 0:
            raise SpectralError("emission spectrum is zero over the visible range")
        self.edges = edges
        self.pdf_bins = weights / total / widths
        self.cdf = np.concatenate([[0.0], np.cumsum(weights) / total])
        self.cdf[-1] = 1.0

    def sample(self, u):
        u = np.asarray(u, float)
        idx = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, len(self.pdf_bins) - 1)
        # skip zero-probability bins that searchsorted can land on at their edge
        lo, hi = self.cdf[idx], self.cdf[idx + 1]
        frac = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.5)
        lam = self.edges[idx] + np.clip(frac, 0.0, 1.0) * (self.edges[idx + 1] - self.edges[idx])
        return lam, self.pdf_bins[idx]

    def pdf(self, wavelength):
        wl = np.asarray(wavelength, float)
        idx = np.clip(np.searchsorted(self.edges, wl, side="right") - 1, 0, len(self.pdf_bins) - 1)
        inside = (wl >= LAMBDA_MIN) & (wl <= LAMBDA_MAX)
        return np.where(inside, self.pdf_bins[idx], 0.0)


@lru_cache(maxsize=128)
def emission_sampler(spectrum: Spectrum) -> EmissionSampler:
    return EmissionSampler(spectrum)


def sample_emission_wavelengths(spectrum: Spectrum, u):
    """Draw one wavelength per uniform in ``u`` proportionally to ``spectrum``."""
    return emission_sampler(spectrum).sample(u)


# ---------------------------------------------------------------------------
# colour
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def cie_table() -> np.ndarray:
    with resources.files("waveray").joinpath("data/cie1931_2deg.txt").open() as fh:
        return np.loadtxt(fh)


def cmf(wavelength):
    """CIE 1931 2-degree colour matching functions, shape ``wavelength.shape + (3,)``."""
    t = cie_table()
    wl = np.asarray(wavelength, float)
    return np.stack([np.interp(wl, t[:, 0], t[:, k], left=0.0, right=0.0) for k in (1, 2, 3)], -1)


@lru_cache(maxsize=1)
def y_normalisation() -> float:
    """Integral of ybar over the visible range: a constant unit spectrum has Y = 1."""
    wl = np.linspace(LAMBDA_MIN, LAMBDA_MAX, 3201)
    return float(np.trapezoid(cmf(wl)[:, 1], wl))


def xyz_to_rgb(xyz):
    return np.asarray(xyz) @ XYZ_TO_SRGB.T


def spectral_accumulate_to_rgb(samples, clamp=True) -> np.ndarray:
    """Accumulate ``(wavelength, weight)`` pairs to linear sRGB.

    Weights are spectral radiance already divided by their sampling density;
    the result is normalised so a unit constant spectrum maps to Y = 1.
    """
    samples = list(samples)
    if not samples:
        return np.zeros(3)
    wl, w = np.asarray(samples, float).T
    xyz = (w[:, None] * cmf(wl)).sum(0) / y_normalisation()
    rgb = xyz_to_rgb(xyz)
    return np.clip(rgb, 0.0, None) if clamp else rgb


def spectrum_to_rgb(spectrum, n: int = 3201) -> np.ndarray:
    """Reference RGB of a radiance spectrum by dense trapezoidal quadrature."""
    wl = np.linspace(LAMBDA_MIN, LAMBDA_MAX, n)
    xyz = np.trapezoid(spectrum(wl)[:, None] * cmf(wl), wl, axis=0) / y_normalisation()
    return xyz_to_rgb(xyz)
