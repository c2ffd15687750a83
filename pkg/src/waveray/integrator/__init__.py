"""Two-stage spectral Mueller path tracer.

The sample stage walks paths backward from the sensor at a hero wavelength
and collects light connections; the solve stage re-walks each connection
forward from the light with full Mueller arithmetic at four wavelengths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_THETA_FLOOR, MODES, RenderConfig
from .manifold import Chain, newton
from .mis import balance, mis_weight
from .render import RenderResult, render
from .solve import solve
from .wavefront import CONN_NAMES, Connections, PathStore, trace_batch


@dataclass
class Path:
    """One traced camera sample with its light connections."""

    scene: object
    config: RenderConfig
    store: PathStore
    connections: Connections

    @property
    def hero(self) -> float:
        return float(self.store.hero[0])

    @property
    def depth(self) -> int:
        return len(self.store.vertices)

    @property
    def kinds(self) -> list:
        return [CONN_NAMES[int(k)] for k in self.connections.kind]


def trace_sample(scene, pixel, rng, config: RenderConfig | None = None,
                 sample_index: int = 0) -> Path:
    """Trace a single camera sample through ``pixel`` (x, y)."""
    cfg = config or RenderConfig()
    px, py = pixel
    store, conns = trace_batch(scene, cfg, np.array([px]), np.array([py]),
                               np.array([sample_index]), rng)
    return Path(scene, cfg, store, conns)


def solve_path(path: Path, mode: str | None = None, stokes: bool = False):
    """Linear RGB estimate of a traced sample. ``mode`` must match the tracing mode.

    With ``stokes`` also returns the per-connection, per-wavelength Stokes
    vectors (m, L, 4) arriving at the sensor."""
    if mode is not None and mode != path.config.mode:
        raise ValueError(f"path was traced in {path.config.mode!r} mode, not {mode!r}")
    _, rgb, s = solve(path.scene, path.config, path.store, path.connections, stokes=True)
    total = rgb.sum(0) if len(rgb) else np.zeros(3)
    return (total, s) if stokes else total


def manifold_next_event(scene, x, y, material):
    """Refraction points (p1, p2) of the path x -> p1 -> p2 -> y through the
    two interfaces of ``material`` crossed by the straight segment, or None."""
    x = np.asarray(x, float).reshape(1, 3)
    y = np.asarray(y, float).reshape(1, 3)
    mat = scene.material_index(material) if isinstance(material, str) else int(material)
    bsdf = scene.materials[mat]
    dist = float(np.linalg.norm(y - x))
    w = (y - x) / dist
    h1 = scene.intersect_batch(x, w)
    if not (h1.hit[0] and h1.material[0] == mat and h1.t[0] < dist):
        return None
    h2 = scene.intersect_batch(h1.pos, w)
    if not (h2.hit[0] and h2.material[0] == mat and h1.t[0] + h2.t[0] < dist):
        return None
    eta = np.real(bsdf.ior(np.array([550.0])))
    chain = Chain(h1.pos, h1.tangent, h1.bitangent, h1.normal,
                  h2.pos, h2.tangent, h2.bitangent, h2.normal, eta, np.array([bsdf.ambient]))
    uv, ok = newton(chain, x, y, np.zeros((1, 4)))
    if not ok[0]:
        return None
    p1, p2 = chain.points(uv)
    return p1[0], p2[0]


__all__ = [
    "DEFAULT_THETA_FLOOR", "MODES", "Path", "RenderConfig", "RenderResult", "balance",
    "manifold_next_event", "mis_weight", "render", "solve_path", "trace_sample",
]
