"""Reflective diffraction gratings with scalar Fraunhofer order efficiencies.

Orders obey the grating equation on tangential direction components,

    t(wi) = -t(wo) + lambda * (m1 / L1 * g1 + m2 / L2 * g2),

so ``theta_i = 0`` gives ``sin(theta_m) = m lambda / L``. Raw efficiencies
come from the groove profile with reciprocal phase depth
``Delta = k h (cos_i + cos_o)``:

* sinusoidal (height amplitude h): ``J_m(Delta)^2``
* rectangular (step h, 50 % duty): ``cos^2(Delta/2)`` for m = 0,
  ``(2/(m pi))^2 sin^2(Delta/2)`` for odd m, 0 otherwise
* triangular (blaze depth h): ``sinc^2(m - Delta/(2 pi))``

and are renormalised over the propagating orders so that they sum to the
base Fresnel reflectance at the exit direction.
"""
from __future__ import annotations

import numpy as np
from scipy.special import jv

from ..spectral import RefractiveIndex, fresnel_mueller
from .base import (BSDF, LOBE_GLOSSY, LOBE_NONE, LOBE_ORDER, NM, SampleBatch,
                   gnomonic_pdf, gnomonic_sample)

PROFILES = ("sinusoidal", "rectangular", "triangular")


def profile_efficiency(profile: str, m, phase_depth):
    m = np.asarray(m, float)
    d = np.asarray(phase_depth, float)
    if profile == "sinusoidal":
        return jv(m, d) ** 2
    if profile == "rectangular":
        odd = (np.abs(m) % 2) == 1
        zero = m == 0
        safe_m = np.where(m == 0, 1.0, m)
        return np.where(zero, np.cos(d / 2) ** 2,
                        np.where(odd, (2 / (np.pi * safe_m)) ** 2 * np.sin(d / 2) ** 2, 0.0))
    if profile == "triangular":
        return np.sinc(m - d / (2 * np.pi)) ** 2
    raise ValueError(f"unknown grating profile {profile!r}")


class Grating(BSDF):
    name = "grating"
    has_delta = True
    is_grating = True

    def __init__(self, profile: str, periods, height: float, orientation_deg: float = 0.0,
                 ior: RefractiveIndex | None = None, ambient: float = 1.0):
        if profile not in PROFILES:
            raise ValueError(f"grating profile must be one of {PROFILES}")
        periods = np.atleast_1d(np.asarray(periods, float))
        if periods.size not in (1, 2) or np.any(periods <= 0):
            raise ValueError("one or two positive periods required")
        if height < 0:
            raise ValueError("grating height must be non-negative")
        self.profile = profile
        self.periods = periods
        self.height = float(height)
        self.orientation = np.deg2rad(orientation_deg)
        self.ior = ior or RefractiveIndex.constant(0.27, 2.78)
        self.ambient = float(ambient)
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        self.g = np.array([[c, s], [-s, c]])[: periods.size]

    def _order_range(self, lam_max_nm):
        lam_min = 380.0 * NM
        span = [int(np.ceil(2 * p / lam_min)) + 1 for p in self.periods]
        if len(span) == 1:
            m = np.arange(-span[0], span[0] + 1)
            return np.stack([m, np.zeros_like(m)], -1)
        a, b = np.meshgrid(np.arange(-span[0], span[0] + 1), np.arange(-span[1], span[1] + 1),
                           indexing="ij")
        return np.stack([a.ravel(), b.ravel()], -1)

    def orders(self, wo, lam):
        """All candidate orders for exit directions ``wo`` (n,3) and hero ``lam`` (n,).

        Returns ``(m (M,2), wi (n,M,3), weight (n,M), propagating (n,M), R (n,))``
        where ``weight`` sums to one over propagating orders and R is the base
        Fresnel reflectance at ``wo``.
        """
        wo = np.asarray(wo, float)
        lam = np.broadcast_to(np.asarray(lam, float), wo.shape[:-1])
        m = self._order_range(lam.max() if lam.size else 700.0)
        lam_m = lam[..., None] * NM
        shift = np.zeros(lam.shape + (len(m), 2))
        for axis, period in enumerate(self.periods):
            shift += (lam_m * m[:, axis] / period)[..., None] * self.g[axis]
        ti = -wo[..., None, :2] + shift
        t2 = np.sum(ti * ti, -1)
        prop = (t2 < 1.0) & (wo[..., None, 2] > 0)
        ci = np.sqrt(np.clip(1 - t2, 0, 1))
        wi = np.concatenate([ti, ci[..., None]], -1)
        co = np.clip(wo[..., 2], 0, 1)[..., None]
        depth = 2 * np.pi / lam_m * self.height * (ci + co)
        raw = np.ones(prop.shape)
        for axis in range(len(self.periods)):
            raw = raw * profile_efficiency(self.profile, m[:, axis], depth)
        raw = np.where(prop, raw, 0.0)
        total = raw.sum(-1, keepdims=True)
        weight = np.where(total > 0, raw / np.where(total > 0, total, 1.0), 0.0)
        r, _, _, _ = fresnel_mueller(co[..., 0], self.ambient, self.ior(lam))
        return m, wi, weight, prop, r[..., 0, 0]

    def grating_orders(self, wo, lam):
        """List of (m, wi, efficiency) for a single exit direction."""
        m, wi, weight, prop, r = self.orders(np.asarray(wo, float)[None], np.array([lam]))
        out = []
        for k in np.flatnonzero(prop[0]):
            mk = tuple(int(x) for x in m[k]) if len(self.periods) == 2 else int(m[k, 0])
            out.append((mk, wi[0, k], float(weight[0, k] * r[0])))
        return out

    def _choose(self, weight, u):
        cdf = np.cumsum(weight, -1)
        idx = np.sum(cdf < (u * cdf[:, -1])[:, None], -1)
        return np.minimum(idx, weight.shape[1] - 1)

    def sample(self, wo, lam, u, floor_cov=None, **kw):
        """Pick an order proportional to its efficiency. With ``floor_cov``
        (rad^2) the order becomes a Gaussian lobe of that covariance."""
        n = len(wo)
        s = SampleBatch.empty(n)
        m, wi_all, weight, prop, r = self.orders(wo, lam)
        ok = weight.sum(-1) > 0
        idx = self._choose(weight, u[:, 0])
        rows = np.arange(n)
        wi = wi_all[rows, idx]
        s.order = m[idx].astype(np.int32)
        if floor_cov is None:
            s.wi = wi
            s.pdf = np.where(ok, weight[rows, idx], 0.0)
            s.weight = np.where(ok, r, 0.0)
            s.lobe = np.where(ok, LOBE_ORDER, LOBE_NONE).astype(np.int8)
            s.delta = ok
            s.dispersive = ok & np.any(s.order != 0, -1)
            return s
        w = gnomonic_sample(wi, floor_cov, u[:, 1], u[:, 2])
        pdf = self._mixture_pdf(w, wi_all, weight, floor_cov)
        ok = ok & (w[:, 2] > 1e-6) & (pdf > 0)
        s.wi = w
        s.pdf = np.where(ok, pdf, 0.0)
        s.lobe = np.where(ok, LOBE_GLOSSY, LOBE_NONE).astype(np.int8)
        s.order = np.zeros((n, 2), np.int32)
        # value is left to the caller (partially-coherent evaluation)
        s.weight = np.zeros(n)
        return s

    @staticmethod
    def _mixture_pdf(w, wi_all, weight, cov):
        cov = np.asarray(cov, float)
        if cov.ndim == 3:
            cov = cov[:, None]
        dens = gnomonic_pdf(w[:, None, :], wi_all, cov)
        return np.sum(weight * dens, -1)

    def pdf(self, wi, wo, lam, floor_cov=None, **kw):
        if floor_cov is None:
            return np.zeros(len(wi))
        _, wi_all, weight, _, _ = self.orders(wo, lam)
        return np.where(wi[:, 2] > 0, self._mixture_pdf(wi, wi_all, weight, floor_cov), 0.0)

    def order_mueller(self, wo, order, lam):
        """Per-wavelength Mueller weight of a given order: w_m(lam) * Fresnel(cos_o, lam)."""
        n, nl = lam.shape
        flat_lam = lam.reshape(-1)
        wo_rep = np.repeat(wo, nl, axis=0)
        m, _, weight, _, _ = self.orders(wo_rep, flat_lam)
        key = order[:, None, :] == m[None, :, :]
        hit = np.all(key, -1)
        hit = np.repeat(hit, nl, axis=0)
        w = np.sum(np.where(hit, weight, 0.0), -1).reshape(n, nl)
        r, _, _, _ = fresnel_mueller(np.clip(wo[:, 2], 0, 1)[:, None], self.ambient, self.ior(lam))
        return r * w[..., None, None]

    def delta_mueller(self, wi, wo, lobe, order, lam):
        out = self.order_mueller(wo, order, lam)
        return np.where((lobe == LOBE_ORDER)[:, None, None, None], out, 0.0)

    def delta_energy(self, wo, lam):
        _, _, weight, _, r = self.orders(wo, lam)
        return np.where(weight.sum(-1) > 0, r, 0.0)

    def dispersive_lobe(self, lobe, order):
        return (np.asarray(lobe) == LOBE_ORDER) & np.any(np.asarray(order) != 0, -1)

    def pc_weights(self, wi, wo, cov, lam):
        """Per-wavelength scalar sum_m w_m p_bundle(wi*_m; wi, cov) / cos_i.

        ``lam`` is (n, L); returns (n, L)."""
        n, nl = lam.shape
        wo_rep = np.repeat(wo, nl, axis=0)
        wi_rep = np.repeat(wi, nl, axis=0)
        cov = np.asarray(cov, float)
        if cov.ndim == 4:       # one covariance per wavelength
            cov = cov.reshape(-1, 2, 2)
        elif cov.ndim == 3:
            cov = np.repeat(cov, nl, axis=0)
        elif cov.ndim == 1:
            cov = np.repeat(cov, nl, axis=0)[:, None, None] * np.eye(2)
        _, wi_all, weight, _, _ = self.orders(wo_rep, lam.reshape(-1))
        dens = gnomonic_pdf(wi_all, wi_rep[:, None, :],
                            cov[:, None] if np.ndim(cov) == 3 else cov)
        val = np.sum(weight * dens, -1) / np.maximum(wi_rep[:, 2], 1e-12)
        return val.reshape(n, nl)

    def pc_mueller(self, wi, wo, omega_blur, lam, include_delta=True):
        if not include_delta:
            return np.zeros(lam.shape + (4, 4))
        scal = self.pc_weights(wi, wo, omega_blur, lam)
        r, _, _, _ = fresnel_mueller(np.clip(wo[:, 2], 0, 1)[:, None], self.ambient, self.ior(lam))
        return r * scal[..., None, None] * (wi[:, 2] > 0)[:, None, None, None]
