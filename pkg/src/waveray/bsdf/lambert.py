"""Lambertian diffuser: a perfect depolariser with albedo rho/pi."""
from __future__ import annotations

import numpy as np

from ..coherence import LAMBERTIAN_SPREAD
from ..spectral import Spectrum
from .base import BSDF, LOBE_DIFFUSE, SampleBatch, cosine_hemisphere


class Lambertian(BSDF):
    name = "lambert"
    has_nondelta = True

    def __init__(self, albedo=0.5):
        if isinstance(albedo, Spectrum):
            self.albedo = albedo
        else:
            if not 0.0 <= float(albedo) <= 1.0:
                raise ValueError("albedo must lie in [0, 1]")
            self.albedo = Spectrum.constant(float(albedo))

    def _rho(self, lam):
        return np.clip(self.albedo(lam), 0.0, 1.0)

    def eval(self, wi, wo, lam):
        up = (wi[:, 2] > 0) & (wo[:, 2] > 0)
        return np.where(up, self._rho(lam) / np.pi, 0.0)

    def eval_mueller(self, wi, wo, lam):
        up = ((wi[:, 2] > 0) & (wo[:, 2] > 0))[:, None]
        m = np.zeros(lam.shape + (4, 4))
        m[..., 0, 0] = np.where(up, self._rho(lam) / np.pi, 0.0)
        return m

    def pdf(self, wi, wo, lam, **kw):
        return np.where(wo[:, 2] > 0, np.clip(wi[:, 2], 0.0, None) / np.pi, 0.0)

    def sample(self, wo, lam, u, **kw):
        n = len(wo)
        s = SampleBatch.empty(n)
        wi = cosine_hemisphere(u[:, 0], u[:, 1])
        ok = (wo[:, 2] > 0) & (wi[:, 2] > 0)
        s.wi = wi
        s.pdf = np.where(ok, wi[:, 2] / np.pi, 0.0)
        s.weight = np.where(ok, self._rho(lam), 0.0)
        s.lobe = np.where(ok, LOBE_DIFFUSE, 0).astype(np.int8)
        return s

    def spread(self, lam):
        return LAMBERTIAN_SPREAD

    def pc_mueller(self, wi, wo, omega_blur, lam, include_delta=True):
        # convolution of a constant: unchanged by any Theta
        return self.eval_mueller(wi, wo, lam)
