"""Triangle meshes, a binned-SAH BVH and ray queries.

Traversal runs in a numba kernel; :func:`intersect_brute` is a plain numpy
Moller-Trumbore loop over all triangles used as an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

RAY_EPSILON = 1e-4
MAX_LEAF = 4
N_BINS = 12


@dataclass
class TriangleSoup:
    """Flattened scene triangles with per-face attributes."""

    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    material: np.ndarray      # int per face
    emitter: np.ndarray       # int per face, -1 if not emissive
    tangent: np.ndarray       # unit tangent per face (in the face plane)

    @property
    def n(self) -> int:
        return len(self.v0)

    @property
    def normal(self) -> np.ndarray:
        nrm = np.cross(self.v1 - self.v0, self.v2 - self.v0)
        return nrm / np.linalg.norm(nrm, axis=1, keepdims=True)

    @property
    def area(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(np.cross(self.v1 - self.v0, self.v2 - self.v0), axis=1)

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("v0", "v1", "v2", "material", "emitter", "tangent")))


def face_tangents(v0, v1, v2, axis=None):
    """Tangent per face: projection of ``axis`` (or the first edge) onto the face."""
    nrm = np.cross(v1 - v0, v2 - v0)
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    ref = (v1 - v0) if axis is None else np.broadcast_to(np.asarray(axis, float), v0.shape)
    t = ref - np.sum(ref * nrm, 1, keepdims=True) * nrm
    bad = np.linalg.norm(t, axis=1) < 1e-12
    t[bad] = (v1 - v0)[bad]
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def mesh_triangles(vertices, faces, material: int, emitter: int = -1, tangent_axis=None):
    vertices = np.asarray(vertices, float)
    faces = np.asarray(faces, int)
    v0, v1, v2 = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    if np.any(np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1) < 1e-14):
        raise ValueError("degenerate triangle in mesh")
    n = len(faces)
    return TriangleSoup(v0, v1, v2, np.full(n, material, np.int32), np.full(n, emitter, np.int32),
                        face_tangents(v0, v1, v2, tangent_axis))


def quad(p0, p1, p2, p3):
    """Vertices/faces of a planar quad p0-p1-p2-p3 (counter-clockwise about its normal)."""
    return np.array([p0, p1, p2, p3], float), np.array([[0, 1, 2], [0, 2, 3]])


def icosphere(centre, radius, subdivisions=2):
    t = (1 + 5**0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.asarray(centre, float) + radius * np.array(verts), np.array(faces)


def load_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise ValueError(f"{path}: no faces")
    return np.array(verts), np.array(faces)


# ---------------------------------------------------------------------------
# BVH
# ---------------------------------------------------------------------------

@dataclass
class BVH:
    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray     # child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray    # leaf range into ``prims``
    count: np.ndarray
    prims: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)


def _surface_area(lo, hi):
    d = np.maximum(hi - lo, 0.0)
    return 2 * (d[..., 0] * d[..., 1] + d[..., 1] * d[..., 2] + d[..., 2] * d[..., 0])


def build_bvh(tris: TriangleSoup) -> BVH:
    """Binned SAH build, at most ``MAX_LEAF`` primitives per leaf."""
    lo = np.minimum(np.minimum(tris.v0, tris.v1), tris.v2)
    hi = np.maximum(np.maximum(tris.v0, tris.v1), tris.v2)
    cen = 0.5 * (lo + hi)
    bmin, bmax, left, right, start, count = [], [], [], [], [], []
    order = []

    def new_node():
        for arr in (bmin, bmax):
            arr.append(np.zeros(3))
        for arr in (left, right, start, count):
            arr.append(-1)
        return len(left) - 1

    root = new_node()
    stack = [(root, np.arange(tris.n))]
    while stack:
        node, idx = stack.pop()
        bmin[node] = lo[idx].min(0)
        bmax[node] = hi[idx].max(0)
        split = None
        if len(idx) > MAX_LEAF:
            c = cen[idx]
            clo, chi = c.min(0), c.max(0)
            best = np.inf
            parent_area = max(_surface_area(bmin[node], bmax[node]), 1e-300)
            for axis in range(3):
                extent = chi[axis] - clo[axis]
                if extent <= 1e-12:
                    continue
                b = np.minimum(((c[:, axis] - clo[axis]) / extent * N_BINS).astype(int),
                               N_BINS - 1)
                for k in range(1, N_BINS):
                    mask = b < k
                    nl = mask.sum()
                    if nl == 0 or nl == len(idx):
                        continue
                    li, ri = idx[mask], idx[~mask]
                    cost = (nl * _surface_area(lo[li].min(0), hi[li].max(0)) +
                            (len(idx) - nl) * _surface_area(lo[ri].min(0), hi[ri].max(0)))
                    cost = 0.125 + cost / parent_area
                    if cost < best:
                        best, split = cost, mask
            if split is None:
                # all centroids coincide along every axis: split by index
                split = np.zeros(len(idx), bool)
                split[: len(idx) // 2] = True
        if split is None:
            start[node] = len(order)
            count[node] = len(idx)
            order.extend(idx.tolist())
            continue
        ln, rn = new_node(), new_node()
        left[node], right[node] = ln, rn
        stack.append((rn, idx[~split]))
        stack.append((ln, idx[split]))
    return BVH(np.array(bmin), np.array(bmax), np.array(left, np.int64), np.array(right, np.int64),
               np.array(start, np.int64), np.array(count, np.int64), np.array(order, np.int64))


@njit(cache=True)
def _ray_box(ox, oy, oz, ix, iy, iz, lo, hi, tmax):
    t0 = 0.0
    t1 = tmax
    for a in range(3):
        o = ox if a == 0 else (oy if a == 1 else oz)
        inv = ix if a == 0 else (iy if a == 1 else iz)
        ta = (lo[a] - o) * inv
        tb = (hi[a] - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@njit(cache=True, nogil=True)
def _traverse(orig, dirs, tmax_in, any_hit, bmin, bmax, left, right, start, count, prims,
              v0, e1, e2, eps):
    n = orig.shape[0]
    out_t = np.full(n, np.inf)
    out_p = np.full(n, -1, np.int64)
    out_u = np.zeros(n)
    out_v = np.zeros(n)
    stack = np.empty(128, np.int64)
    for r in range(n):
        ox, oy, oz = orig[r, 0], orig[r, 1], orig[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        ix = 1.0 / dx if dx != 0.0 else 1e300
        iy = 1.0 / dy if dy != 0.0 else 1e300
        iz = 1.0 / dz if dz != 0.0 else 1e300
        best = tmax_in[r]
        sp = 0
        stack[sp] = 0
        sp += 1
        done = False
        while sp > 0 and not done:
            sp -= 1
            node = stack[sp]
            if not _ray_box(ox, oy, oz, ix, iy, iz, bmin[node], bmax[node], best):
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    p = prims[k]
                    # Moller-Trumbore
                    px = dy * e2[p, 2] - dz * e2[p, 1]
                    py = dz * e2[p, 0] - dx * e2[p, 2]
                    pz = dx * e2[p, 1] - dy * e2[p, 0]
                    det = e1[p, 0] * px + e1[p, 1] * py + e1[p, 2] * pz
                    if abs(det) < 1e-14:
                        continue
                    inv_det = 1.0 / det
                    tx, ty, tz = ox - v0[p, 0], oy - v0[p, 1], oz - v0[p, 2]
                    u = (tx * px + ty * py + tz * pz) * inv_det
                    if u < 0.0 or u > 1.0:
                        continue
                    qx = ty * e1[p, 2] - tz * e1[p, 1]
                    qy = tz * e1[p, 0] - tx * e1[p, 2]
                    qz = tx * e1[p, 1] - ty * e1[p, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv_det
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t = (e2[p, 0] * qx + e2[p, 1] * qy + e2[p, 2] * qz) * inv_det
                    if t > eps and (t < best or (t == best and p < out_p[r])):
                        best = t
                        out_t[r] = t
                        out_p[r] = p
                        out_u[r] = u
                        out_v[r] = v
                        if any_hit:
                            done = True
                            break
            else:
                stack[sp] = right[node]
                sp += 1
                stack[sp] = left[node]
                sp += 1
    return out_t, out_p, out_u, out_v


@dataclass
class HitBatch:
    t: np.ndarray
    prim: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.prim >= 0


class Accelerator:
    def __init__(self, tris: TriangleSoup):
        self.tris = tris
        self.bvh = build_bvh(tris)
        self._v0 = np.ascontiguousarray(tris.v0)
        self._e1 = np.ascontiguousarray(tris.v1 - tris.v0)
        self._e2 = np.ascontiguousarray(tris.v2 - tris.v0)

    def intersect(self, orig, dirs, tmax=None, any_hit=False, eps=RAY_EPSILON) -> HitBatch:
        orig = np.ascontiguousarray(orig, float)
        dirs = np.ascontiguousarray(dirs, float)
        n = len(orig)
        tmax = np.full(n, np.inf) if tmax is None else np.ascontiguousarray(
            np.broadcast_to(tmax, (n,)), float)
        b = self.bvh
        t, p, u, v = _traverse(orig, dirs, tmax, any_hit, b.bmin, b.bmax, b.left, b.right,
                               b.start, b.count, b.prims, self._v0, self._e1, self._e2, eps)
        return HitBatch(t, p, u, v)

    def occluded(self, orig, dirs, tmax) -> np.ndarray:
        return self.intersect(orig, dirs, tmax, any_hit=True).hit


def intersect_brute(tris: TriangleSoup, orig, dirs, eps=RAY_EPSILON) -> HitBatch:
    """All-pairs numpy Moller-Trumbore (oracle)."""
    orig = np.asarray(orig, float)[:, None, :]
    d = np.asarray(dirs, float)[:, None, :]
    e1 = (tris.v1 - tris.v0)[None]
    e2 = (tris.v2 - tris.v0)[None]
    p = np.cross(d, e2)
    det = np.sum(e1 * p, -1)
    ok = np.abs(det) >= 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = orig - tris.v0[None]
    u = np.sum(tv * p, -1) * inv
    q = np.cross(tv, e1)
    v = np.sum(d * q, -1) * inv
    t = np.sum(e2 * q, -1) * inv
    valid = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > eps)
    t = np.where(valid, t, np.inf)
    prim = np.argmin(t, axis=1)
    rows = np.arange(len(prim))
    best = t[rows, prim]
    hit = np.isfinite(best)
    return HitBatch(best, np.where(hit, prim, -1), np.where(hit, u[rows, prim], 0.0),
                    np.where(hit, v[rows, prim], 0.0))
