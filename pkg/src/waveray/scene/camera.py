"""Pinhole camera. Pixel (0, 0) is the top-left corner of the image."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PinholeCamera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = None
    fov_deg: float = 40.0     # vertical field of view
    width: int = 64
    height: int = 64

    def __post_init__(self):
        self.position = np.asarray(self.position, float)
        self.look_at = np.asarray(self.look_at, float)
        self.up = np.array([0.0, 0.0, 1.0]) if self.up is None else np.asarray(self.up, float)
        fwd = self.look_at - self.position
        if np.linalg.norm(fwd) == 0:
            raise ValueError("camera position and look_at coincide")
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        if np.linalg.norm(right) < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        right /= np.linalg.norm(right)
        self.forward, self.right, self.true_up = fwd, right, np.cross(right, fwd)
        if not (0 < self.fov_deg < 180) or self.width < 1 or self.height < 1:
            raise ValueError("invalid camera fov or resolution")
        self.tan_half = np.tan(np.deg2rad(self.fov_deg) / 2)

    @property
    def resolution(self):
        return self.width, self.height

    def generate(self, px, py, jx, jy):
        """Primary ray directions through pixel positions ``px + jx``, ``py + jy``."""
        aspect = self.width / self.height
        sx = (2 * (px + jx) / self.width - 1) * self.tan_half * aspect
        sy = (1 - 2 * (py + jy) / self.height) * self.tan_half
        d = self.forward + sx[:, None] * self.right + sy[:, None] * self.true_up
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def project(self, points):
        """Continuous pixel coordinates (x, y) of world points; nan behind the camera."""
        v = np.asarray(points, float) - self.position
        z = v @ self.forward
        ok = z > 0
        z = np.where(ok, z, np.nan)
        sx = (v @ self.right) / z / (self.tan_half * self.width / self.height)
        sy = (v @ self.true_up) / z / self.tan_half
        return (sx + 1) * self.width / 2, (1 - sy) * self.height / 2
