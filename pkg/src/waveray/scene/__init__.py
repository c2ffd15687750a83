"""Scene representation: triangle geometry, BVH queries, emitters, camera and loader."""
from .camera import PinholeCamera
from .emitters import AreaEmitter, DistantEmitter, EmitterSample, EmitterSet, EnvmapEmitter
from .geometry import (Accelerator, TriangleSoup, build_bvh, icosphere, intersect_brute,
                       load_obj, mesh_triangles, quad)
from .loader import SceneError, bundled_scene_path, load_scene, load_scene_text
from .scene import Hit, Scene, SurfaceHit, build_scene, intersect, sample_emitter

__all__ = [
    "Accelerator", "AreaEmitter", "DistantEmitter", "EmitterSample", "EmitterSet",
    "EnvmapEmitter", "Hit", "PinholeCamera", "Scene", "SceneError", "SurfaceHit",
    "TriangleSoup", "build_bvh", "build_scene", "bundled_scene_path", "icosphere",
    "intersect", "intersect_brute", "load_obj", "load_scene", "load_scene_text",
    "mesh_triangles", "quad", "sample_emitter",
]
