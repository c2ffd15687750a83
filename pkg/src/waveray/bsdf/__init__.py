"""Coherent diffractive BSDFs and their partially-coherent evaluation.

The functions here are thin conveniences over the vectorised material
classes; directions are local (z = normal), wavelengths in nm.
"""
from __future__ import annotations

import numpy as np

from ..coherence import diffusivity_from_coherence
from .base import (BSDF, BSDFError, LOBE_DIFFUSE, LOBE_GLOSSY, LOBE_NAMES, LOBE_NONE,
                   LOBE_ORDER, LOBE_REFLECT, LOBE_REFRACT, SampleBatch)
from .grating import Grating, profile_efficiency
from .harvey_shack import HarveyShack, KCorrelationPSD
from .lambert import Lambertian
from .multilayer import Multilayer, MultilayerStack, tmm_reflectance
from .specular import Conductor, Dielectric

__all__ = [
    "BSDF", "BSDFError", "Conductor", "Dielectric", "Grating", "HarveyShack", "KCorrelationPSD",
    "Lambertian", "Multilayer", "MultilayerStack", "SampleBatch", "eval_coherent",
    "eval_partially_coherent", "grating_orders", "pdf", "profile_efficiency", "sample",
    "tmm_reflectance", "LOBE_NAMES", "LOBE_NONE", "LOBE_DIFFUSE", "LOBE_GLOSSY",
    "LOBE_REFLECT", "LOBE_REFRACT", "LOBE_ORDER",
]


def _one(v):
    return np.asarray(v, float).reshape(1, 3)


def _check_wavelengths(lam_i, lam_o):
    if lam_o is not None and not np.isclose(lam_i, lam_o):
        raise BSDFError("incident and exit wavelengths differ; cross-wavelength "
                        "scattering is not modelled")


def eval_coherent(material: BSDF, wi, wo, lam, lam_o=None) -> np.ndarray:
    """Non-delta Mueller matrix (4x4, 1/sr) for one direction pair."""
    _check_wavelengths(lam, lam_o)
    return material.eval_mueller(_one(wi), _one(wo), np.array([[float(lam)]]))[0, 0]


def pdf(material: BSDF, wi, wo, lam, **kw) -> float:
    return float(material.pdf(_one(wi), _one(wo), np.array([float(lam)]), **kw)[0])


def sample(material: BSDF, wo, u, lam, **kw) -> SampleBatch:
    return material.sample(_one(wo), np.array([float(lam)]), np.asarray(u, float).reshape(1, 3),
                           **kw)


def grating_orders(grating: Grating, wo, lam):
    return grating.grating_orders(np.asarray(wo, float), float(lam))


def eval_partially_coherent(material: BSDF, wi, wo, theta, lam) -> np.ndarray:
    """Mueller matrix of the BSDF convolved with the bundle's direction density.

    ``theta`` is the 2x2 coherence shape matrix (m^2); the angular blur is
    ``lambda^2 theta^-1``."""
    omega = diffusivity_from_coherence(theta, float(lam) * 1e-9)
    return material.pc_mueller(_one(wi), _one(wo), omega, np.array([[float(lam)]]))[0, 0]
