"""Light sources: distant (Gaussian angular profile), area patches and environment maps.

Every emitter reports spectral radiance as ``g * spectrum(lambda)`` where the
scalar ``g`` carries the spatial/angular dependence. Sampling returns
solid-angle pdfs at the reference point.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..bsdf.base import cosine_hemisphere, gnomonic_pdf, gnomonic_sample, normalize
from ..coherence import SOURCE_AREA_M2, envmap_cluster_solid_angle
from ..spectral import LAMBDA_MAX, LAMBDA_MIN, Spectrum


def _spectrum_integral(spectrum: Spectrum) -> float:
    wl = np.linspace(LAMBDA_MIN, LAMBDA_MAX, 321)
    return float(np.trapezoid(np.clip(spectrum(wl), 0, None), wl))


def _local_frame(n):
    """Orthonormal frame (t, b, n) per row."""
    a = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t = normalize(np.cross(a, n))
    return t, np.cross(n, t)


@dataclass
class EmitterSample:
    wi: np.ndarray        # unit direction from the reference point toward the light
    dist: np.ndarray      # inf for infinite emitters
    g: np.ndarray         # radiance factor (radiance = g * spectrum)
    pdf: np.ndarray       # solid-angle pdf of this emitter's strategy (no selection)
    point: np.ndarray     # sampled light position (nan for infinite emitters)
    normal: np.ndarray


class Emitter:
    kind = "emitter"
    infinite = False
    spectrum: Spectrum

    def power(self, scene_radius: float) -> float:
        raise NotImplementedError


@dataclass
class DistantEmitter(Emitter):
    """Directional source of total irradiance ``irradiance`` (W/m^2 per unit
    spectrum) spread over a Gaussian of covariance ``solid_angle/(2 pi)`` on
    the gnomonic plane about ``direction`` (pointing toward the source)."""

    direction: np.ndarray
    solid_angle: float
    irradiance: float = 1.0
    spectrum: Spectrum = field(default_factory=Spectrum.constant)
    kind = "distant"
    infinite = True

    def __post_init__(self):
        self.direction = normalize(np.asarray(self.direction, float))
        if not self.solid_angle > 0:
            raise ValueError("distant emitter needs a positive solid angle")
        self.cov = self.solid_angle / (2 * np.pi) * np.eye(2)

    def power(self, scene_radius):
        return self.irradiance * _spectrum_integral(self.spectrum) * np.pi * scene_radius**2

    def radiance_factor(self, w):
        return self.irradiance * gnomonic_pdf(w, self.direction, self.cov)

    def pdf_dir(self, w, ref_normal=None):
        return gnomonic_pdf(w, self.direction, self.cov)

    def sample(self, ref, ref_normal, u):
        n = len(ref)
        c = np.broadcast_to(self.direction, (n, 3))
        w = gnomonic_sample(c, self.cov, u[:, 0], u[:, 1])
        p = gnomonic_pdf(w, c, self.cov)
        return EmitterSample(w, np.full(n, np.inf), self.irradiance * p, p,
                             np.full((n, 3), np.nan), np.zeros((n, 3)))

    def source_solid_angle(self, dist=None):
        return self.solid_angle


@dataclass
class AreaEmitter(Emitter):
    """One-sided emissive triangles (emission along the face normal)."""

    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    radiance: float = 1.0
    spectrum: Spectrum = field(default_factory=Spectrum.constant)
    sourcing_area: float = SOURCE_AREA_M2
    ms_chain: str | None = None
    kind = "area"

    def __post_init__(self):
        e1, e2 = self.v1 - self.v0, self.v2 - self.v0
        cr = np.cross(e1, e2)
        self.areas = 0.5 * np.linalg.norm(cr, axis=1)
        self.normals = cr / (2 * self.areas[:, None])
        self.total_area = float(self.areas.sum())
        self.cdf = np.cumsum(self.areas) / self.total_area
        if self.sourcing_area > self.total_area:
            warnings.warn(f"emitter patch area {self.total_area:.3g} m^2 is smaller than the "
                          f"sourcing area {self.sourcing_area:.3g} m^2; clamping", stacklevel=2)
            self.sourcing_area = self.total_area

    def power(self, scene_radius):
        return self.radiance * self.total_area * np.pi * _spectrum_integral(self.spectrum)

    def sample(self, ref, ref_normal, u):
        n = len(ref)
        k = np.minimum(np.searchsorted(self.cdf, u[:, 2], side="right"), len(self.cdf) - 1)
        su = np.sqrt(u[:, 0])
        b0, b1 = 1 - su, u[:, 1] * su
        p = (b0[:, None] * self.v0[k] + b1[:, None] * self.v1[k]
             + (1 - b0 - b1)[:, None] * self.v2[k])
        d = p - ref
        dist = np.linalg.norm(d, axis=1)
        w = d / np.maximum(dist, 1e-300)[:, None]
        nl = self.normals[k]
        cos_l = -np.sum(w * nl, 1)
        ok = cos_l > 1e-9
        pdf = np.where(ok, dist**2 / (self.total_area * np.where(ok, cos_l, 1.0)), 0.0)
        g = np.where(ok, self.radiance, 0.0)
        return EmitterSample(w, dist, g, pdf, p, nl)

    def pdf_hit(self, dist, cos_l):
        """Solid-angle pdf for a ray that hit the emitter at ``dist`` with cosine ``cos_l``."""
        ok = cos_l > 1e-9
        return np.where(ok, dist**2 / (self.total_area * np.where(ok, cos_l, 1.0)), 0.0)

    def radiance_hit(self, cos_l):
        return np.where(cos_l > 0, self.radiance, 0.0)

    def source_solid_angle(self, dist):
        return self.sourcing_area / np.maximum(dist, 1e-9) ** 2


@dataclass
class EnvmapEmitter(Emitter):
    """Environment light. ``image`` (H, W) is a lat-long scalar map with +z up;
    without an image the radiance is constant and next-event draws follow
    the cosine lobe about the receiver normal."""

    radiance: float = 1.0
    spectrum: Spectrum = field(default_factory=Spectrum.constant)
    image: np.ndarray | None = None
    cluster: int = 2
    kind = "envmap"
    infinite = True

    def __post_init__(self):
        if self.image is not None:
            img = np.asarray(self.image, float)
            if img.ndim == 3:
                img = img @ np.array([0.2126, 0.7152, 0.0722])
            if np.any(img < 0) or img.max() <= 0:
                raise ValueError("envmap image must be non-negative and not all zero")
            self.image = img
            h, w = img.shape
            theta = (np.arange(h) + 0.5) * np.pi / h
            weights = img * np.sin(theta)[:, None]
            self.pix_prob = (weights / weights.sum()).ravel()
            self.pix_cdf = np.cumsum(self.pix_prob)
            self.pix_cdf[-1] = 1.0

    @property
    def shape(self):
        return (32, 64) if self.image is None else self.image.shape

    def power(self, scene_radius):
        mean = 1.0 if self.image is None else float(
            np.sum(self.image * np.sin((np.arange(self.shape[0]) + 0.5) * np.pi / self.shape[0])[:, None])
            / np.sum(np.sin((np.arange(self.shape[0]) + 0.5) * np.pi / self.shape[0])) / self.shape[1])
        return self.radiance * mean * _spectrum_integral(self.spectrum) * 4 * np.pi**2 * scene_radius**2

    def _pixel(self, w):
        h, wd = self.shape
        theta = np.arccos(np.clip(w[:, 2], -1, 1))
        phi = np.mod(np.arctan2(w[:, 1], w[:, 0]), 2 * np.pi)
        row = np.minimum((theta / np.pi * h).astype(int), h - 1)
        col = np.minimum((phi / (2 * np.pi) * wd).astype(int), wd - 1)
        return row, col, theta

    def radiance_factor(self, w):
        if self.image is None:
            return np.full(len(w), self.radiance)
        row, col, _ = self._pixel(w)
        return self.radiance * self.image[row, col]

    def pdf_dir(self, w, ref_normal):
        if self.image is None:
            return np.clip(np.sum(w * ref_normal, 1), 0, None) / np.pi
        h, wd = self.shape
        row, col, theta = self._pixel(w)
        sin_t = np.maximum(np.sin(theta), 1e-12)
        return self.pix_prob[row * wd + col] * h * wd / (2 * np.pi**2 * sin_t)

    def sample(self, ref, ref_normal, u):
        n = len(ref)
        if self.image is None:
            t, b = _local_frame(ref_normal)
            loc = cosine_hemisphere(u[:, 0], u[:, 1])
            w = loc[:, :1] * t + loc[:, 1:2] * b + loc[:, 2:] * ref_normal
            pdf = loc[:, 2] / np.pi
        else:
            h, wd = self.shape
            k = np.minimum(np.searchsorted(self.pix_cdf, u[:, 2], side="right"), h * wd - 1)
            row, col = np.divmod(k, wd)
            theta = (row + u[:, 0]) * np.pi / h
            phi = (col + u[:, 1]) * 2 * np.pi / wd
            st = np.sin(theta)
            w = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], -1)
            pdf = self.pdf_dir(w, ref_normal)
        return EmitterSample(w, np.full(n, np.inf), self.radiance_factor(w), pdf,
                             np.full((n, 3), np.nan), np.zeros((n, 3)))

    def source_solid_angle(self, w):
        h, wd = self.shape
        theta = np.arccos(np.clip(np.asarray(w)[..., 2], -1, 1))
        return np.vectorize(lambda t: envmap_cluster_solid_angle(wd, h, t, self.cluster))(theta)


class EmitterSet:
    """Emitters with selection probability proportional to (estimated) power."""

    def __init__(self, emitters, scene_radius: float = 1.0):
        self.emitters = list(emitters)
        if not self.emitters:
            self.prob = np.zeros(0)
            return
        power = np.array([e.power(scene_radius) for e in self.emitters], float)
        if np.any(power <= 0):
            raise ValueError("every emitter needs positive power")
        self.prob = power / power.sum()
        self.cdf = np.cumsum(self.prob)
        self.cdf[-1] = 1.0

    def __len__(self):
        return len(self.emitters)

    def __getitem__(self, i):
        return self.emitters[i]

    def select(self, u):
        return np.minimum(np.searchsorted(self.cdf, u, side="right"), len(self.emitters) - 1)
