"""The immutable scene container and its ray queries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bsdf import BSDF, Lambertian
from .camera import PinholeCamera
from .emitters import AreaEmitter, EmitterSample, EmitterSet
from .geometry import Accelerator, TriangleSoup


@dataclass
class SurfaceHit:
    """Batch of ray hits. ``prim == -1`` marks a miss."""

    t: np.ndarray
    prim: np.ndarray
    pos: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    material: np.ndarray
    emitter: np.ndarray

    @property
    def hit(self):
        return self.prim >= 0

    @property
    def bitangent(self):
        return np.cross(self.normal, self.tangent)


@dataclass
class Hit:
    """A single ray hit."""

    t: float
    position: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    bitangent: np.ndarray
    material: str
    emitter: int | None


@dataclass
class Scene:
    tris: TriangleSoup
    materials: list
    material_names: list
    emitters: EmitterSet
    camera: PinholeCamera
    min_feature: float = 1e-3
    emitter_tris: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tris.n == 0:
            raise ValueError("scene has no geometry")
        if np.any(self.tris.material < 0) or np.any(self.tris.material >= len(self.materials)):
            raise ValueError("triangle material index out of range")
        self.accel = Accelerator(self.tris)
        self._normal = self.tris.normal
        lo = np.minimum(self.tris.v0, np.minimum(self.tris.v1, self.tris.v2)).min(0)
        hi = np.maximum(self.tris.v0, np.maximum(self.tris.v1, self.tris.v2)).max(0)
        self.bounds = (lo, hi)
        self.radius = float(0.5 * np.linalg.norm(hi - lo))

    @property
    def meshes(self):
        return sorted(set(self.tris.material.tolist()))

    def material_index(self, name):
        return self.material_names.index(name)

    def intersect_batch(self, orig, dirs, tmax=None) -> SurfaceHit:
        h = self.accel.intersect(orig, dirs, tmax)
        ok = h.hit
        p = np.where(ok, h.prim, 0)
        pos = orig + np.where(ok, h.t, 0.0)[:, None] * dirs
        return SurfaceHit(h.t, h.prim, pos, self._normal[p], self.tris.tangent[p],
                          np.where(ok, self.tris.material[p], -1),
                          np.where(ok, self.tris.emitter[p], -1))

    def occluded(self, orig, dirs, tmax):
        return self.accel.occluded(orig, dirs, tmax)

    def sample_emitter(self, ref, ref_normal, u):
        """Pick an emitter by power and draw a direction from it.

        ``u`` is (n, 4): selection, then three uniforms for the emitter.
        Returns (emitter index, EmitterSample with pdf including selection)."""
        sel = self.emitters.select(u[:, 0])
        n = len(ref)
        out = EmitterSample(np.zeros((n, 3)), np.full(n, np.inf), np.zeros(n), np.zeros(n),
                            np.full((n, 3), np.nan), np.zeros((n, 3)))
        for e in np.unique(sel):
            m = sel == e
            s = self.emitters[e].sample(ref[m], ref_normal[m], u[m, 1:4])
            out.wi[m], out.dist[m], out.g[m] = s.wi, s.dist, s.g
            out.pdf[m] = s.pdf * self.emitters.prob[e]
            out.point[m], out.normal[m] = s.point, s.normal
        return sel, out


def intersect(scene: Scene, origin, direction) -> Hit | None:
    """Nearest hit of a single ray, or None."""
    o = np.asarray(origin, float).reshape(1, 3)
    d = np.asarray(direction, float).reshape(1, 3)
    h = scene.intersect_batch(o, d / np.linalg.norm(d))
    if not h.hit[0]:
        return None
    e = int(h.emitter[0])
    return Hit(float(h.t[0]), h.pos[0], h.normal[0], h.tangent[0], h.bitangent[0],
               scene.material_names[h.material[0]], e if e >= 0 else None)


def sample_emitter(scene: Scene, ref, u, ref_normal=(0.0, 0.0, 1.0)):
    """Single-point emitter draw: (emitter index, direction, distance, radiance factor, pdf)."""
    sel, s = scene.sample_emitter(np.asarray(ref, float).reshape(1, 3),
                                  np.asarray(ref_normal, float).reshape(1, 3),
                                  np.asarray(u, float).reshape(1, 4))
    return int(sel[0]), s.wi[0], float(s.dist[0]), float(s.g[0]), float(s.pdf[0])


def build_scene(parts, materials: dict, emitters, camera, min_feature=1e-3) -> Scene:
    """Assemble a scene from ``(TriangleSoup)`` parts, a name->BSDF dict and emitters.

    Area emitters contribute their own (black) triangles."""
    names = list(materials)
    mats = [materials[k] for k in names]
    parts = list(parts)
    if any(isinstance(e, AreaEmitter) for e in emitters):
        names.append("__emitter__")
        mats.append(Lambertian(0.0))
    for i, e in enumerate(emitters):
        if isinstance(e, AreaEmitter):
            n = len(e.v0)
            parts.append(TriangleSoup(e.v0, e.v1, e.v2, np.full(n, len(names) - 1, np.int32),
                                      np.full(n, i, np.int32),
                                      (e.v1 - e.v0) / np.linalg.norm(e.v1 - e.v0, axis=1,
                                                                    keepdims=True)))
    tris = TriangleSoup.concat(parts)
    lo = np.minimum(tris.v0, np.minimum(tris.v1, tris.v2)).min(0)
    hi = np.maximum(tris.v0, np.maximum(tris.v1, tris.v2)).max(0)
    radius = max(float(0.5 * np.linalg.norm(hi - lo)), 1e-3)
    return Scene(tris, mats, names, EmitterSet(emitters, radius), camera, min_feature)


__all__ = ["BSDF", "Hit", "Scene", "SurfaceHit", "build_scene", "intersect", "sample_emitter"]
