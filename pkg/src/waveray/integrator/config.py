"""Render configuration."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

MODES = ("sample-solve", "fully-coherent", "pc-baseline")

# coherence area of a 0.5 sr source at 550 nm (m^2)
DEFAULT_THETA_FLOOR = (550e-9) ** 2 / (0.5 / (2 * np.pi))


@dataclass(frozen=True)
class RenderConfig:
    mode: str = "sample-solve"
    spp: int = 16
    max_depth: int = 16
    rr_depth: int = 3
    seed: int = 0
    resolution: tuple | None = None      # (width, height); camera default when None
    theta_floor: float = DEFAULT_THETA_FLOOR
    roi: tuple | None = None             # (x, y, w, h) pixel rectangle
    threads: int | None = None
    manifold: bool = True
    batch_size: int = 65536
    tile: int = 16

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.spp < 1 or self.max_depth < 1 or self.rr_depth < 1:
            raise ValueError("spp, max_depth and rr_depth must be positive")
        if not self.theta_floor > 0:
            raise ValueError("theta_floor must be positive")
        if self.batch_size < 1 or self.tile < 1:
            raise ValueError("batch_size and tile must be positive")

    def floor_cov(self, lam_nm):
        """Isotropic angular covariance (rad^2) of the pc-baseline floor lobe."""
        return (np.asarray(lam_nm, float) * 1e-9) ** 2 / self.theta_floor

    def workers(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get("WAVERAY_THREADS")
        cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
        return max(1, cap)
