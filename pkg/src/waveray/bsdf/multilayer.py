"""Thin-film stacks via the characteristic-matrix (transfer-matrix) method.

The stack is opaque beyond the substrate: only the specular reflection is
transported; transmitted power is absorbed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..spectral import RefractiveIndex, mueller_from_amplitudes
from .base import BSDF, LOBE_NONE, LOBE_REFLECT, NM, SampleBatch, gnomonic_pdf, reflect_z


@dataclass(frozen=True)
class MultilayerStack:
    layers: tuple = ()
    substrate: RefractiveIndex = field(default_factory=lambda: RefractiveIndex.constant(1.5))
    ambient: RefractiveIndex = field(default_factory=lambda: RefractiveIndex.constant(1.0))

    def __post_init__(self):
        for thickness, _ in self.layers:
            if thickness <= 0:
                raise ValueError("layer thickness must be positive")


def tmm_reflectance(stack: MultilayerStack, cos_i, lam_nm):
    """Complex reflection amplitudes (r_s, r_p) of ``stack``.

    Sign convention matches :func:`waveray.spectral.fresnel_amplitudes`, so an
    empty stack reproduces the bare-interface Fresnel coefficients.
    """
    cos_i = np.asarray(cos_i, float)
    lam = np.asarray(lam_nm, float)
    shape = np.broadcast_shapes(cos_i.shape, lam.shape)
    cos_i = np.broadcast_to(cos_i, shape)
    lam = np.broadcast_to(lam, shape)
    n0 = stack.ambient(lam)
    sin2 = (n0 * np.sqrt(np.clip(1 - cos_i**2, 0, 1))) ** 2

    def cos_in(n):
        c = np.sqrt(1 - sin2 / n**2 + 0j)
        return np.where(c.imag < 0, -c, c)

    def admittances(n, c):
        return n * c, n / c

    c0 = cos_i + 0j
    eta0 = admittances(n0, c0)
    ns = stack.substrate(lam)
    eta_sub = admittances(ns, cos_in(ns))
    out = []
    for pol in (0, 1):
        m11 = np.ones(shape, complex)
        m12 = np.zeros(shape, complex)
        m21 = np.zeros(shape, complex)
        m22 = np.ones(shape, complex)
        for thickness, ior in stack.layers:
            n = ior(lam)
            c = cos_in(n)
            eta = admittances(n, c)[pol]
            delta = 2 * np.pi * n * thickness * c / (lam * NM)
            a11, a12 = np.cos(delta), 1j * np.sin(delta) / eta
            a21, a22 = 1j * eta * np.sin(delta), np.cos(delta)
            m11, m12, m21, m22 = (m11 * a11 + m12 * a21, m11 * a12 + m12 * a22,
                                  m21 * a11 + m22 * a21, m21 * a12 + m22 * a22)
        e0, es = eta0[pol], eta_sub[pol]
        b = m11 + m12 * es
        c = m21 + m22 * es
        r = (e0 * b - c) / (e0 * b + c)
        out.append(r if pol == 0 else -r)
    return out[0], out[1]


class Multilayer(BSDF):
    name = "multilayer"
    has_delta = True

    def __init__(self, stack: MultilayerStack):
        self.stack = stack

    def _mueller(self, cos_o, lam):
        rs, rp = tmm_reflectance(self.stack, cos_o, lam)
        return mueller_from_amplitudes(rs, rp)

    def sample(self, wo, lam, u, **kw):
        s = SampleBatch.empty(len(wo))
        ok = wo[:, 2] > 0
        r = self._mueller(np.clip(wo[:, 2], 0, 1), lam)[:, 0, 0]
        s.wi = reflect_z(wo)
        s.pdf = np.where(ok, 1.0, 0.0)
        s.weight = np.where(ok, r, 0.0)
        s.lobe = np.where(ok, LOBE_REFLECT, LOBE_NONE).astype(np.int8)
        s.delta = ok
        return s

    def delta_mueller(self, wi, wo, lobe, order, lam):
        m = self._mueller(np.clip(wo[:, 2], 0, 1)[:, None], lam)
        return np.where((lobe == LOBE_REFLECT)[:, None, None, None], m, 0.0)

    def delta_energy(self, wo, lam):
        return np.where(wo[:, 2] > 0, self._mueller(np.clip(wo[:, 2], 0, 1), lam)[:, 0, 0], 0.0)

    def pc_mueller(self, wi, wo, omega_blur, lam, include_delta=True):
        if not include_delta:
            return np.zeros(lam.shape + (4, 4))
        g = gnomonic_pdf(reflect_z(wo), wi, omega_blur) / np.maximum(wi[:, 2], 1e-12)
        return self.delta_mueller(wi, wo, np.full(len(wo), LOBE_REFLECT), None, lam) * \
            g[:, None, None, None]
