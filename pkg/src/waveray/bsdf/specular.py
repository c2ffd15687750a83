"""Smooth conductor and dielectric interfaces (delta lobes with Fresnel Mueller weights)."""
from __future__ import annotations

import numpy as np

from ..spectral import RefractiveIndex, fresnel_mueller
from .base import (BSDF, LOBE_NONE, LOBE_REFLECT, LOBE_REFRACT, SampleBatch,
                   gnomonic_pdf, reflect_z)


class Conductor(BSDF):
    """Smooth mirror; ``ior`` may be complex (eta + i kappa)."""

    name = "conductor"
    has_delta = True

    def __init__(self, ior: RefractiveIndex, ambient: float = 1.0):
        self.ior = ior
        self.ambient = float(ambient)

    def _reflect(self, cos_o, lam):
        r, _, _, _ = fresnel_mueller(cos_o, self.ambient, self.ior(lam))
        return r

    def sample(self, wo, lam, u, **kw):
        s = SampleBatch.empty(len(wo))
        ok = wo[:, 2] > 0
        r = self._reflect(np.abs(wo[:, 2]), lam)[:, 0, 0]
        s.wi = reflect_z(wo)
        s.pdf = np.where(ok, 1.0, 0.0)
        s.weight = np.where(ok, r, 0.0)
        s.lobe = np.where(ok, LOBE_REFLECT, LOBE_NONE).astype(np.int8)
        s.delta = ok
        return s

    def delta_mueller(self, wi, wo, lobe, order, lam):
        m = self._reflect(np.abs(wo[:, 2])[:, None], lam)
        return np.where((lobe == LOBE_REFLECT)[:, None, None, None], m, 0.0)

    def delta_energy(self, wo, lam):
        return np.where(wo[:, 2] > 0, self._reflect(np.abs(wo[:, 2]), lam)[:, 0, 0], 0.0)

    def pc_mueller(self, wi, wo, omega_blur, lam, include_delta=True):
        if not include_delta:
            return np.zeros(lam.shape + (4, 4))
        g = gnomonic_pdf(reflect_z(wo), wi, omega_blur) / np.maximum(wi[:, 2], 1e-12)
        return self.delta_mueller(wi, wo, np.full(len(wo), LOBE_REFLECT), None, lam) * \
            g[:, None, None, None]


class Dielectric(BSDF):
    """Smooth two-sided dielectric; the local +z side is the ambient medium."""

    name = "dielectric"
    has_delta = True
    transmissive = True

    def __init__(self, ior: RefractiveIndex, ambient: float = 1.0):
        self.ior = ior
        self.ambient = float(ambient)

    def _etas(self, wo, lam):
        inner = np.real(self.ior(lam))
        outside = (wo[:, 2] > 0)
        if np.ndim(lam) == 2:
            outside = outside[:, None]
        eta_o = np.where(outside, self.ambient, inner)
        eta_t = np.where(outside, inner, self.ambient)
        return eta_o, eta_t

    def sample(self, wo, lam, u, **kw):
        n = len(wo)
        s = SampleBatch.empty(n)
        cos_o = np.abs(wo[:, 2])
        eta_o, eta_t = self._etas(wo, lam)
        r, t, cos_t, tir = fresnel_mueller(cos_o, eta_o, eta_t)
        big_r = np.where(tir, 1.0, r[:, 0, 0])
        refl = u[:, 0] < big_r
        ratio = eta_o / eta_t
        side = np.sign(wo[:, 2])
        wt = np.stack([-ratio * wo[:, 0], -ratio * wo[:, 1], -side * np.real(cos_t)], -1)
        s.wi = np.where(refl[:, None], reflect_z(wo), wt)
        s.pdf = np.where(refl, big_r, 1 - big_r)
        s.weight = np.where(refl, 1.0, ratio**2)
        s.lobe = np.where(refl, LOBE_REFLECT, LOBE_REFRACT).astype(np.int8)
        s.delta[:] = True
        s.dispersive = (~refl) & self.ior.dispersive
        return s

    def delta_mueller(self, wi, wo, lobe, order, lam):
        eta_o, eta_t = self._etas(wo, lam)
        cos_o = np.abs(wo[:, 2])[:, None]
        cos_l = np.abs(wi[:, 2])[:, None]
        r, _, _, _ = fresnel_mueller(cos_o, eta_o, eta_t)
        # transmission evaluated with incidence on the light side
        _, t, _, _ = fresnel_mueller(cos_l, eta_t, eta_o)
        t = t * ((eta_o / eta_t) ** 2)[..., None, None]
        is_r = (lobe == LOBE_REFLECT)[:, None, None, None]
        is_t = (lobe == LOBE_REFRACT)[:, None, None, None]
        return np.where(is_r, r, np.where(is_t, t, 0.0))

    def delta_energy(self, wo, lam):
        eta_o, eta_t = self._etas(wo, lam)
        r, t, _, tir = fresnel_mueller(np.abs(wo[:, 2]), eta_o, eta_t)
        return r[:, 0, 0] + t[:, 0, 0]

    def dispersive_lobe(self, lobe, order):
        return (np.asarray(lobe) == LOBE_REFRACT) & self.ior.dispersive
