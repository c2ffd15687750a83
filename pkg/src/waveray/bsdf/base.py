"""Shared BSDF plumbing: local frames, Stokes frames, Gaussian angular lobes.

All BSDF methods work in the local shading frame (z = surface normal) and
are vectorised over a leading batch axis. Naming follows path tracing:
``wo`` points toward the sensor, ``wi`` toward the light. Mueller outputs
map Stokes vectors in the canonical incident frame (x = z cross wi) to the
canonical exit frame (x = z cross wo).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..spectral import rotation_mueller

# lobe tags
LOBE_NONE = 0
LOBE_DIFFUSE = 1
LOBE_GLOSSY = 2
LOBE_REFLECT = 3
LOBE_REFRACT = 4
LOBE_ORDER = 5

LOBE_NAMES = {LOBE_NONE: "none", LOBE_DIFFUSE: "diffuse", LOBE_GLOSSY: "glossy",
              LOBE_REFLECT: "delta-reflect", LOBE_REFRACT: "delta-refract",
              LOBE_ORDER: "grating-order"}

NM = 1e-9


class BSDFError(ValueError):
    pass


def normalize(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def stokes_x(d):
    """Canonical Stokes x-axis for local direction(s) ``d``: normalised z x d."""
    d = np.asarray(d, float)
    x = np.stack([-d[..., 1], d[..., 0], np.zeros_like(d[..., 0])], -1)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    fallback = np.zeros_like(x)
    fallback[..., 0] = 1.0
    return np.where(n > 1e-12, x / np.maximum(n, 1e-300), fallback)


def frame_angle(prop, x_from, x_to):
    """Angle from ``x_from`` to ``x_to`` about the propagation direction ``prop``."""
    y_from = np.cross(prop, x_from)
    return np.arctan2(np.sum(x_to * y_from, -1), np.sum(x_to * x_from, -1))


def rotate_into(mueller, wi, wo, x_in_local, x_out_local):
    """Express a Mueller matrix given in frames (x_in_local, x_out_local)
    in the canonical frames of ``wi`` / ``wo``. ``mueller`` is (n, L, 4, 4)."""
    phi_i = frame_angle(-wi, stokes_x(wi), x_in_local)
    phi_o = frame_angle(wo, x_out_local, stokes_x(wo))
    r_i = rotation_mueller(phi_i)[:, None]
    r_o = rotation_mueller(phi_o)[:, None]
    return r_o @ mueller @ r_i


def reflect_z(w):
    w = np.asarray(w, float)
    return w * np.array([-1.0, -1.0, 1.0])


def spherical_to_local(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], -1)


def cosine_hemisphere(u1, u2):
    r = np.sqrt(u1)
    phi = 2 * np.pi * u2
    return np.stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(0.0, 1 - u1))], -1)


# ---------------------------------------------------------------------------
# Gaussian angular lobes on the gnomonic plane
# ---------------------------------------------------------------------------

def gnomonic_basis(c):
    """Orthonormal (e1, e2) transverse to unit vector(s) ``c``; e1 is the
    canonical Stokes x-axis of ``c``."""
    e1 = stokes_x(c)
    e2 = np.cross(c, e1)
    return e1, e2


def _as_cov(cov, shape):
    cov = np.asarray(cov, float)
    if cov.ndim == 0:
        cov = cov * np.eye(2)
    if cov.shape == (2, 2):
        cov = np.broadcast_to(cov, shape + (2, 2))
    return cov


def gnomonic_pdf(w, c, cov):
    """Solid-angle density at ``w`` of a Gaussian (covariance ``cov``, rad^2)
    on the gnomonic plane tangent to ``c``. Broadcasts over leading axes."""
    w = np.asarray(w, float)
    c = np.asarray(c, float)
    shape = np.broadcast_shapes(w.shape, c.shape)[:-1]
    e1, e2 = gnomonic_basis(np.broadcast_to(c, shape + (3,)))
    dz = np.sum(w * c, -1)
    ok = dz > 1e-9
    dz = np.where(ok, dz, 1.0)
    x = np.sum(w * e1, -1) / dz
    y = np.sum(w * e2, -1) / dz
    cov = _as_cov(cov, shape)
    a, b, d = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    det = a * d - b * b
    q = (d * x * x - 2 * b * x * y + a * y * y) / det
    g = np.exp(-0.5 * q) / (2 * np.pi * np.sqrt(det))
    return np.where(ok, g * (1 + x * x + y * y) ** 1.5, 0.0)


def gnomonic_sample(c, cov, u1, u2):
    """Sample directions about ``c``; returns unit vectors."""
    c = np.asarray(c, float)
    shape = c.shape[:-1]
    cov = _as_cov(cov, shape)
    chol = np.linalg.cholesky(cov)
    r = np.sqrt(-2 * np.log(np.maximum(1 - u1, 1e-300)))
    z = np.stack([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], -1)
    xy = np.einsum("...ij,...j->...i", chol, z)
    e1, e2 = gnomonic_basis(c)
    return normalize(c + xy[..., :1] * e1 + xy[..., 1:] * e2)


# Gauss-Hermite nodes for expectations under a standard normal, 5 points
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(5)
_GH_W = _GH_W / _GH_W.sum()


def gauss_hermite_directions(c, cov):
    """25 tensor-product nodes for E[h(w)] with w ~ gnomonic Gaussian about ``c``.

    Returns (directions (n, 25, 3), weights (25,))."""
    c = np.asarray(c, float)
    shape = c.shape[:-1]
    cov = _as_cov(cov, shape)
    chol = np.linalg.cholesky(cov)
    gx, gy = np.meshgrid(_GH_X, _GH_X, indexing="ij")
    z = np.stack([gx.ravel(), gy.ravel()], -1)
    wts = np.outer(_GH_W, _GH_W).ravel()
    xy = np.einsum("...ij,kj->...ki", chol, z)
    e1, e2 = gnomonic_basis(c)
    d = c[..., None, :] + xy[..., :1] * e1[..., None, :] + xy[..., 1:] * e2[..., None, :]
    return normalize(d), wts


@dataclass
class SampleBatch:
    wi: np.ndarray
    pdf: np.ndarray
    weight: np.ndarray
    lobe: np.ndarray
    order: np.ndarray
    delta: np.ndarray
    dispersive: np.ndarray

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, 3)), np.zeros(n), np.zeros(n), np.zeros(n, np.int8),
                   np.zeros((n, 2), np.int32), np.zeros(n, bool), np.zeros(n, bool))

    @property
    def valid(self):
        return self.lobe != LOBE_NONE


class BSDF:
    """Interface. Subclasses override what they support."""

    name = "bsdf"
    has_nondelta = False
    has_delta = False
    is_grating = False
    transmissive = False

    def eval(self, wi, wo, lam):
        """Non-delta m00 (1/sr), hero wavelength in nm."""
        return np.zeros(len(wi))

    def eval_mueller(self, wi, wo, lam):
        """Non-delta Mueller (n, L, 4, 4) for wavelengths ``lam`` (n, L)."""
        return np.zeros(lam.shape + (4, 4))

    def pdf(self, wi, wo, lam, **kw):
        return np.zeros(len(wi))

    def sample(self, wo, lam, u, **kw) -> SampleBatch:
        raise NotImplementedError

    def delta_mueller(self, wi, wo, lobe, order, lam):
        """Delta-lobe throughput (not divided by the selection probability)."""
        return np.zeros(np.shape(lam) + (4, 4))

    def delta_energy(self, wo, lam):
        """Total energy of the delta lobes for exit direction ``wo``."""
        return np.zeros(len(wo))

    def dispersive_lobe(self, lobe, order):
        return np.zeros(np.shape(lobe), bool)

    def spread(self, lam):
        """Angular covariance (rad^2, isotropic) a non-delta lobe adds to a bundle."""
        return 0.0

    def pc_mueller(self, wi, wo, omega_blur, lam, include_delta=True):
        """Partially-coherent Mueller: the BSDF convolved with a bundle whose
        mean incident direction is ``wi`` and angular covariance ``omega_blur``.

        Default: 5x5 Gauss-Hermite quadrature of :meth:`eval_mueller`
        (cosine-weighted, normalised by cos(wi))."""
        dirs, wts = gauss_hermite_directions(wi, omega_blur)
        n, k = dirs.shape[:2]
        flat = dirs.reshape(-1, 3)
        wo_rep = np.repeat(wo, k, axis=0)
        lam_rep = np.repeat(lam, k, axis=0)
        m = self.eval_mueller(flat, wo_rep, lam_rep).reshape((n, k) + lam.shape[1:] + (4, 4))
        cos_ratio = np.clip(dirs[..., 2], 0.0, None) / np.maximum(wi[:, None, 2], 1e-12)
        return np.einsum("nk,nk...->n...", wts[None, :] * cos_ratio, m)
