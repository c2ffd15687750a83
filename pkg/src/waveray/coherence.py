"""Diffusivity and coherence bookkeeping for partially-coherent ray bundles.

Conventions: the diffusivity ``Omega`` is the 2x2 angular covariance (rad^2)
of a bundle's generalised-ray directions about its mean axis, expressed in
the bundle's transverse frame. A source of scalar solid angle ``S`` is split
isotropically as ``Omega = S/(2 pi) I``: a Gaussian angular profile with that
covariance peaks at 1/S per steradian. ``Theta = lambda^2 Omega^-1`` (m^2)
and ``coherence_area = sqrt(det Theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SOURCE_AREA_M2 = 10e-6     # sourcing patch for area emitters (10 mm^2)
LAMBERTIAN_SPREAD = 1.0    # rad^2, angular covariance added by a diffuse bounce


class CoherenceError(ValueError):
    pass


def _check_spd(m, name):
    m = np.asarray(m, float)
    if m.shape != (2, 2) or not np.allclose(m, m.T, rtol=1e-12, atol=0):
        raise CoherenceError(f"{name} must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(m).min() <= 0 or not np.all(np.isfinite(m)):
        raise CoherenceError(f"{name} must be positive definite")
    return m


def coherence_area(theta) -> float:
    return float(np.sqrt(np.linalg.det(theta)))


def solid_angle_measure(omega) -> float:
    """Scalar solid angle represented by a diffusivity matrix."""
    return float(2 * np.pi * np.sqrt(np.linalg.det(omega)))


def coherence_from_diffusivity(omega, wavelength_m: float) -> np.ndarray:
    omega = np.asarray(omega, float)
    if np.linalg.det(omega) <= 0:
        raise CoherenceError("singular diffusivity")
    omega = _check_spd(omega, "Omega")
    if wavelength_m <= 0:
        raise CoherenceError("wavelength must be positive")
    return wavelength_m**2 * np.linalg.inv(omega)


def diffusivity_from_coherence(theta, wavelength_m: float) -> np.ndarray:
    theta = np.asarray(theta, float)
    if np.linalg.det(theta) <= 0:
        raise CoherenceError("singular coherence matrix")
    return wavelength_m**2 * np.linalg.inv(_check_spd(theta, "Theta"))


def isotropic_diffusivity(solid_angle: float) -> np.ndarray:
    if not solid_angle > 0:
        raise CoherenceError("solid angle must be positive")
    return solid_angle / (2 * np.pi) * np.eye(2)


@dataclass(frozen=True)
class BundleState:
    """Ray-bundle coherence state.

    ``omega`` is wavelength independent; ``theta(lam)`` derives the shape
    matrix at any carried wavelength. Area sources keep the reference
    distance ``r_ref`` at which ``omega`` was defined, so the angular spread
    shrinks as ``(r_ref / r)^2`` with further propagation.
    """

    omega: np.ndarray
    wavelength_m: float
    kind: str = "distant"
    path_distance: float = 0.0
    r_ref: float = 0.0
    area: float = 0.0

    def __post_init__(self):
        _check_spd(self.omega, "Omega")
        if self.kind not in ("distant", "area"):
            raise CoherenceError(f"unknown source kind {self.kind!r}")

    @property
    def theta(self) -> np.ndarray:
        return coherence_from_diffusivity(self.omega, self.wavelength_m)

    def theta_at(self, wavelength_m: float) -> np.ndarray:
        return coherence_from_diffusivity(self.omega, wavelength_m)

    @property
    def coherence_area(self) -> float:
        return coherence_area(self.theta)


def source_distant(solid_angle: float, wavelength_m: float) -> BundleState:
    return BundleState(isotropic_diffusivity(solid_angle), wavelength_m, "distant")


def envmap_cluster_solid_angle(width: int, height: int, theta_centre: float,
                               cluster: int = 2) -> float:
    """Solid angle of a ``cluster x cluster`` pixel block of a lat-long map."""
    dtheta = np.pi / height
    dphi = 2 * np.pi / width
    return float(cluster**2 * dtheta * dphi * max(np.sin(theta_centre), np.sin(dtheta / 2)))


def source_area(area: float, r1: float, wavelength_m: float) -> BundleState:
    if not (area > 0 and r1 > 0):
        raise CoherenceError("area and distance must be positive")
    omega = isotropic_diffusivity(area / r1**2)
    return BundleState(omega, wavelength_m, "area", path_distance=r1, r_ref=r1, area=area)


def propagate_distance(b: BundleState, dr: float) -> BundleState:
    if dr < 0:
        raise CoherenceError("distance must be non-negative")
    if dr == 0:
        return b
    r_new = b.path_distance + dr
    if b.kind == "area":
        omega = b.omega * (b.path_distance / r_new) ** 2
        return replace(b, omega=omega, path_distance=r_new)
    return replace(b, path_distance=r_new)


def rotation2(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def transform_at_interaction(b: BundleState, kind: str, *, frame_angle: float = 0.0,
                             cos_i: float = 1.0, cos_t: float = 1.0, eta_ratio: float = 1.0,
                             sigma=None) -> BundleState:
    """Update the bundle at an interaction.

    ``frame_angle`` rotates the transverse frame into the outgoing one. Axis
    0 of the outgoing frame lies in the plane of incidence.

    * ``specular-reflect``: rotation only.
    * ``specular-refract``: the in-plane angular spread scales by the
      refraction Jacobian ``eta_ratio * cos_i / cos_t`` (``eta_ratio =
      eta_i/eta_t``); the perpendicular one by ``eta_ratio``.
    * ``diffractive``: ``Omega' = Omega + sigma``.
    """
    rot = rotation2(frame_angle)
    omega = rot @ b.omega @ rot.T
    if kind == "specular-reflect":
        pass
    elif kind == "specular-refract":
        if cos_t <= 0:
            raise CoherenceError("refraction needs cos_t > 0")
        jac = np.diag([eta_ratio * cos_i / cos_t, eta_ratio])
        omega = jac @ omega @ jac
    elif kind == "diffractive":
        if sigma is None:
            raise CoherenceError("diffractive interaction needs sigma")
        sigma = np.asarray(sigma, float)
        if sigma.ndim == 0:
            sigma = float(sigma) * np.eye(2)
        omega = omega + _check_spd(sigma, "Sigma")
    else:
        raise CoherenceError(f"unknown interaction kind {kind!r}")
    omega = 0.5 * (omega + omega.T)
    return replace(b, omega=omega)
