"""Harvey-Shack rough-surface scatter with a K-correlation (ABC) power spectrum.

Diffuse term, symmetric in (wi, wo):

    f = F(cos_h) * (1 - exp(-b^2)) * S(nu) / lambda^2,
    b = 2 pi sigma (cos_i + cos_o) / lambda,
    nu = |t_i + t_o| / lambda,

where ``t`` are tangential direction components and ``S`` is the PSD
normalised to unit integral over the plane. The specular delta keeps
``F(cos_o) exp(-(4 pi sigma cos_o / lambda)^2)``.
"""
from __future__ import annotations

import numpy as np

from ..spectral import RefractiveIndex, fresnel_amplitudes, fresnel_mueller, mueller_from_amplitudes
from .base import (BSDF, LOBE_GLOSSY, LOBE_NONE, LOBE_REFLECT, NM, SampleBatch,
                   gnomonic_pdf, normalize, reflect_z, rotate_into, stokes_x)


class KCorrelationPSD:
    """Unit-integral K-correlation PSD: S(nu) = (C-1) B^2 / (2 pi) (1 + B^2 nu^2)^(-(C+1)/2)."""

    def __init__(self, corr_length: float, exponent: float = 3.0):
        if corr_length <= 0 or exponent <= 1:
            raise ValueError("need corr_length > 0 and exponent > 1")
        self.corr_length = float(corr_length)
        self.exponent = float(exponent)
        self.b = 2 * np.pi * self.corr_length

    def __call__(self, nu):
        c, b = self.exponent, self.b
        return (c - 1) * b * b / (2 * np.pi) * (1 + (b * np.asarray(nu)) ** 2) ** (-(c + 1) / 2)

    def radial_cdf(self, nu):
        return 1 - (1 + (self.b * np.asarray(nu)) ** 2) ** (-(self.exponent - 1) / 2)

    def sample_radius(self, u):
        u = np.clip(np.asarray(u, float), 0.0, 1 - 1e-16)
        return np.sqrt((1 - u) ** (-2 / (self.exponent - 1)) - 1) / self.b


class HarveyShack(BSDF):
    name = "harvey-shack"
    has_nondelta = True
    has_delta = True

    def __init__(self, sigma_h: float, corr_length: float, exponent: float = 3.0,
                 ior: RefractiveIndex | None = None, ambient: float = 1.0):
        if sigma_h < 0:
            raise ValueError("rms roughness must be non-negative")
        self.sigma_h = float(sigma_h)
        self.psd = KCorrelationPSD(corr_length, exponent)
        self.ior = ior or RefractiveIndex.constant(0.27, 2.78)
        self.ambient = float(ambient)

    # helpers -------------------------------------------------------------
    def _b2(self, cos_sum, lam):
        return (2 * np.pi * self.sigma_h * cos_sum / (lam * NM)) ** 2

    def p_specular(self, cos_o, lam):
        return np.exp(-self._b2(2 * cos_o, lam))

    def _fresnel(self, cos, lam):
        r, _, _, _ = fresnel_mueller(cos, self.ambient, self.ior(lam))
        return r[..., 0, 0]

    def _nu(self, wi, wo, lam):
        t = wi[..., :2] + wo[..., :2]
        return np.linalg.norm(t, axis=-1) / (lam * NM)

    # evaluation ------------------------------------------------------------
    def _scalar(self, wi, wo, lam):
        up = (wi[..., 2] > 0) & (wo[..., 2] > 0)
        ci = np.clip(wi[..., 2], 0, 1)
        co = np.clip(wo[..., 2], 0, 1)
        lam_m = lam * NM
        diffuse = (1 - np.exp(-self._b2(ci + co, lam))) * self.psd(self._nu(wi, wo, lam)) / lam_m**2
        return np.where(up, diffuse, 0.0)

    def eval(self, wi, wo, lam):
        h = normalize(wi + wo)
        cos_h = np.clip(np.sum(wi * h, -1), 0, 1)
        return self._fresnel(cos_h, lam) * self._scalar(wi, wo, lam)

    def eval_mueller(self, wi, wo, lam):
        h = normalize(wi + wo)
        cos_h = np.clip(np.sum(wi * h, -1), 0, 1)
        rs, rp, _, _, _ = fresnel_amplitudes(cos_h[:, None], self.ambient, self.ior(lam))
        local = mueller_from_amplitudes(rs, rp)
        # microfacet plane of incidence: s axis along h x wi
        s_axis = np.cross(h, wi)
        norm = np.linalg.norm(s_axis, axis=-1, keepdims=True)
        s_axis = np.where(norm > 1e-12, s_axis / np.maximum(norm, 1e-300), stokes_x(wi))
        m = rotate_into(local, wi, wo, s_axis, s_axis)
        return m * self._scalar(wi[:, None], wo[:, None], lam)[..., None, None]

    def pdf(self, wi, wo, lam, **kw):
        up = (wi[:, 2] > 0) & (wo[:, 2] > 0)
        p_diff = 1 - self.p_specular(np.clip(wo[:, 2], 0, 1), lam)
        dens = self.psd(self._nu(wi, wo, lam)) * np.clip(wi[:, 2], 0, 1) / (lam * NM) ** 2
        return np.where(up, p_diff * dens, 0.0)

    def sample(self, wo, lam, u, **kw):
        n = len(wo)
        s = SampleBatch.empty(n)
        ok = wo[:, 2] > 0
        cos_o = np.clip(wo[:, 2], 0, 1)
        p_spec = self.p_specular(cos_o, lam)
        spec = u[:, 0] < p_spec
        nu = self.psd.sample_radius(u[:, 1])
        phi = 2 * np.pi * u[:, 2]
        lam_m = lam * NM
        ti = lam_m[:, None] * nu[:, None] * np.stack([np.cos(phi), np.sin(phi)], -1) - wo[:, :2]
        t2 = np.sum(ti * ti, -1)
        inside = t2 < 1.0
        wi_d = np.concatenate([ti, np.sqrt(np.clip(1 - t2, 0, 1))[:, None]], -1)
        wi = np.where(spec[:, None], reflect_z(wo), wi_d)
        diffuse_ok = ok & ~spec & inside & (wi_d[:, 2] > 1e-9)
        spec_ok = ok & spec
        f = self.eval(wi, wo, lam)
        pdf_d = self.pdf(wi, wo, lam)
        s.wi = wi
        s.pdf = np.where(spec_ok, p_spec, np.where(diffuse_ok, pdf_d, 0.0))
        s.weight = np.where(spec_ok, self._fresnel(cos_o, lam),
                            np.where(diffuse_ok, f * wi[:, 2] / np.maximum(pdf_d, 1e-300), 0.0))
        s.lobe = np.where(spec_ok, LOBE_REFLECT,
                          np.where(diffuse_ok, LOBE_GLOSSY, LOBE_NONE)).astype(np.int8)
        s.delta = spec_ok
        return s

    def delta_mueller(self, wi, wo, lobe, order, lam):
        cos_o = np.abs(wo[:, 2])[:, None]
        r, _, _, _ = fresnel_mueller(cos_o, self.ambient, self.ior(lam))
        m = r * self.p_specular(cos_o, lam)[..., None, None]
        return np.where((lobe == LOBE_REFLECT)[:, None, None, None], m, 0.0)

    def delta_energy(self, wo, lam):
        cos_o = np.clip(wo[:, 2], 0, 1)
        return np.where(wo[:, 2] > 0, self._fresnel(cos_o, lam) * self.p_specular(cos_o, lam), 0.0)

    def spread(self, lam):
        # angular width of the PSD lobe, ~ lambda * (1 / B)
        return float((np.mean(lam) * NM / self.psd.b) ** 2)

    def pc_mueller(self, wi, wo, omega_blur, lam, include_delta=True):
        m = super().pc_mueller(wi, wo, omega_blur, lam)
        if include_delta:
            g = gnomonic_pdf(reflect_z(wo), wi, omega_blur) / np.maximum(wi[:, 2], 1e-12)
            m = m + self.delta_mueller(wi, wo, np.full(len(wo), LOBE_REFLECT), None, lam) * \
                g[:, None, None, None]
        return m
