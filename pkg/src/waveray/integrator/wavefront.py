"""Sample stage: backward path sampling with coherent generalised rays.

Paths advance in lockstep (one depth per iteration) over a batch. Each
surface vertex is stored so the solve stage can re-evaluate it at all
carried wavelengths with full Mueller arithmetic. Light connections are
collected as rows of a :class:`Connections` table:

* ``ORGANIC``: the path itself reached an emitter (``last`` = index of the
  final surface vertex, 0 for primary rays).
* ``NEE``: next-event estimation from a non-delta vertex.
* ``BUNDLE``: deterministic connection from a grating vertex to a distant
  emitter along its mean direction, evaluated partially coherently
  (sample-solve only).
* ``MS``: manifold connection through two refracting interfaces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bsdf.base import LOBE_NONE, LOBE_REFRACT
from ..scene.emitters import AreaEmitter, DistantEmitter
from .config import RenderConfig
from .manifold import Chain, generalized_jacobian, newton, reciprocal_probability
from .mis import balance

ORGANIC, NEE, BUNDLE, MS = 0, 1, 2, 3
CONN_NAMES = {ORGANIC: "organic", NEE: "nee", BUNDLE: "bundle", MS: "manifold"}
SHADOW_EPS = 1e-4


@dataclass
class VertexArrays:
    """Surface vertices at one depth, compacted to the rows that reached one."""

    rows: np.ndarray
    pos: np.ndarray
    frame: np.ndarray       # columns: tangent, bitangent, normal (local -> world)
    material: np.ndarray
    wo: np.ndarray          # local, toward the sensor
    wi: np.ndarray          # local, sampled continuation (toward the light)
    lobe: np.ndarray
    order: np.ndarray
    pdf: np.ndarray
    scale: np.ndarray       # cos/pdf (non-delta) or 1/pdf (delta), times 1/RR survival
    glossy_grating: np.ndarray

    @classmethod
    def empty(cls, rows):
        n = len(rows)
        return cls(np.asarray(rows, np.int64), np.zeros((n, 3)), np.zeros((n, 3, 3)), np.full(n, -1, np.int32),
                   np.zeros((n, 3)), np.zeros((n, 3)), np.zeros(n, np.int8),
                   np.zeros((n, 2), np.int32), np.zeros(n), np.zeros(n), np.zeros(n, bool))

    def index(self, rows):
        """Positions of path ``rows`` (all present) in the compacted arrays."""
        return np.searchsorted(self.rows, rows)


@dataclass
class PathStore:
    hero: np.ndarray
    u0: np.ndarray
    camera_dir: np.ndarray
    vertices: list = field(default_factory=list)   # vertex d at index d - 1


_CONN_FIELDS = ("kind", "row", "last", "emitter", "wl", "g", "factor", "dist", "disp",
                "ms_p1", "ms_f1", "ms_p2", "ms_f2", "ms_mat", "ms_y")


@dataclass
class Connections:
    kind: np.ndarray
    row: np.ndarray
    last: np.ndarray
    emitter: np.ndarray
    wl: np.ndarray          # world direction from the last vertex toward the light
    g: np.ndarray           # emitter radiance factor
    factor: np.ndarray      # MIS weight / light pdf and similar scalar factors
    dist: np.ndarray        # distance to the light point (inf for infinite emitters)
    disp: np.ndarray        # hero-only (dispersive delta segment on the path)
    ms_p1: np.ndarray
    ms_f1: np.ndarray
    ms_p2: np.ndarray
    ms_f2: np.ndarray
    ms_mat: np.ndarray
    ms_y: np.ndarray

    def __len__(self):
        return len(self.kind)

    def take(self, idx):
        return Connections(*(getattr(self, f)[idx] for f in _CONN_FIELDS))


class _ConnBuilder:
    def __init__(self):
        self.chunks = []

    def add(self, kind, row, last, emitter, wl, g, factor, dist, disp, ms=None):
        m = len(row)
        if m == 0:
            return
        if ms is None:
            ms = (np.full((m, 3), np.nan), np.zeros((m, 3, 3)), np.full((m, 3), np.nan),
                  np.zeros((m, 3, 3)), np.full(m, -1, np.int32), np.full((m, 3), np.nan))
        self.chunks.append((np.full(m, kind, np.int8), np.asarray(row, np.int64),
                            np.broadcast_to(np.asarray(last, np.int32), (m,)).copy(),
                            np.broadcast_to(np.asarray(emitter, np.int32), (m,)).copy(),
                            np.asarray(wl, float), np.broadcast_to(np.asarray(g, float), (m,)).copy(),
                            np.asarray(factor, float) * np.ones(m),
                            np.broadcast_to(np.asarray(dist, float), (m,)).copy(),
                            np.asarray(disp, bool)) + tuple(ms))

    def build(self) -> Connections:
        if not self.chunks:
            return Connections(np.zeros(0, np.int8), np.zeros(0, np.int64), np.zeros(0, np.int32),
                               np.zeros(0, np.int32), np.zeros((0, 3)), np.zeros(0), np.zeros(0),
                               np.zeros(0), np.zeros(0, bool), np.zeros((0, 3)),
                               np.zeros((0, 3, 3)), np.zeros((0, 3)), np.zeros((0, 3, 3)),
                               np.zeros(0, np.int32), np.zeros((0, 3)))
        cols = list(zip(*self.chunks))
        return Connections(*(np.concatenate(c) for c in cols))


def _to_local(frame, w):
    return np.einsum("nji,nj->ni", frame, w)


def _to_world(frame, w):
    return np.einsum("nij,nj->ni", frame, w)


def _shading_frames(normal, tangent, wo_world, two_sided):
    """Frames with the normal flipped toward ``wo`` unless the material is transmissive."""
    flip = (np.sum(normal * wo_world, 1) < 0) & two_sided
    n = np.where(flip[:, None], -normal, normal)
    b = np.cross(n, tangent)
    return np.stack([tangent, b, n], -1)


def trace_batch(scene, cfg: RenderConfig, px, py, sample_idx, rng):
    """Sample-stage walk for one batch of camera samples.

    Returns (PathStore, Connections)."""
    n = len(px)
    mode = cfg.mode
    ss, pcb = mode == "sample-solve", mode == "pc-baseline"
    emitters = scene.emitters
    n_em = len(emitters)
    jit = rng.random((n, 2))
    xi = rng.random(n)
    u0 = (np.asarray(sample_idx) + xi) / cfg.spp     # per-pixel stratified hero wavelength
    hero = 380.0 + 320.0 * u0
    cam = scene.camera
    dirs = cam.generate(np.asarray(px, float), np.asarray(py, float), jit[:, 0], jit[:, 1])
    store = PathStore(hero, u0, dirs.copy())
    orig = np.broadcast_to(cam.position, (n, 3)).copy()
    beta = np.ones(n)
    alive = np.ones(n, bool)
    prev_pdf = np.zeros(n)
    prev_nee = np.zeros(n, bool)
    prev_normal = np.zeros((n, 3))
    prev_grating = np.zeros(n, bool)
    disp = np.zeros(n, bool)
    ms_stage = np.zeros(n, np.int8)
    ms_mat = np.full(n, -1, np.int32)
    conns = _ConnBuilder()
    inf_emitters = [i for i in range(n_em) if emitters[i].infinite]
    ms_targets = [i for i in range(n_em) if isinstance(emitters[i], AreaEmitter)
                  and emitters[i].ms_chain is not None] if cfg.manifold else []
    ms_chain_ids = {i: scene.material_index(emitters[i].ms_chain) for i in ms_targets}

    for d in range(1, cfg.max_depth + 1):
        act = np.flatnonzero(alive)
        if len(act) == 0:
            break
        u = rng.random((n, 8))
        h = scene.intersect_batch(orig[act], dirs[act])

        # escaped rays: infinite emitters
        miss = act[~h.hit]
        alive[miss] = False
        for ei in inf_emitters:
            e = emitters[ei]
            w = dirs[miss]
            g = e.radiance_factor(w)
            keep = g > 0
            if e.kind == "distant" and ss:
                keep &= ~prev_grating[miss]   # covered by the bundle connection
            p_l = emitters.prob[ei] * e.pdf_dir(w, prev_normal[miss])
            wgt = np.where(prev_nee[miss], balance(prev_pdf[miss], p_l), 1.0)
            rows = miss[keep]
            conns.add(ORGANIC, rows, d - 1, ei, w[keep], g[keep], wgt[keep], np.inf, disp[rows])

        # emitter surfaces
        hit_rows = act[h.hit]
        em = h.emitter[h.hit]
        is_em = em >= 0
        for ei in np.unique(em[is_em]):
            e = emitters[ei]
            sel = is_em & (em == ei)
            rows = hit_rows[sel]
            t = h.t[h.hit][sel]
            w = dirs[rows]
            cos_l = -np.sum(w * h.normal[h.hit][sel], 1)
            g = e.radiance_hit(cos_l)
            p_l = emitters.prob[ei] * e.pdf_hit(t, cos_l)
            wgt = np.where(prev_nee[rows], balance(prev_pdf[rows], p_l), 1.0)
            keep = g > 0
            if ei in ms_chain_ids:
                keep &= ~((ms_stage[rows] == 3) & (ms_mat[rows] == ms_chain_ids[ei]))
            conns.add(ORGANIC, rows[keep], d - 1, ei, w[keep], g[keep], wgt[keep], t[keep],
                      disp[rows[keep]])
            alive[rows] = False

        # scattering vertices
        surf = ~is_em
        rows_all = hit_rows[surf]
        if len(rows_all) == 0:
            continue
        pos_all = h.pos[h.hit][surf]
        mat_all = h.material[h.hit][surf]
        wo_world = -dirs[rows_all]
        two_sided = np.array([not scene.materials[m].transmissive for m in mat_all], bool)
        frame_all = _shading_frames(h.normal[h.hit][surf], h.tangent[h.hit][surf], wo_world,
                                    two_sided)
        wo_all = _to_local(frame_all, wo_world)
        vert = VertexArrays.empty(rows_all)
        vert.pos[:], vert.frame[:], vert.wo[:] = pos_all, frame_all, wo_all
        vert.material[:] = mat_all
        new_alive = np.zeros(n, bool)

        for m in np.unique(mat_all):
            bsdf = scene.materials[m]
            sel = mat_all == m
            rows = rows_all[sel]
            pos, frame, wo = pos_all[sel], frame_all[sel], wo_all[sel]
            lam = hero[rows]
            nrm = frame[:, :, 2]
            grating_pc = pcb and bsdf.is_grating
            floor = None
            if grating_pc:
                floor = cfg.floor_cov(lam)[:, None, None] * np.eye(2)
            nee_here = (bsdf.has_nondelta or grating_pc) and n_em > 0

            if nee_here:
                e_sel, es = scene.sample_emitter(pos, nrm, u[rows, 0:4])
                wl_l = _to_local(frame, es.wi)
                p_b = bsdf.pdf(wl_l, wo, lam, floor_cov=floor)
                ok = (es.g > 0) & (es.pdf > 0)
                factor = balance(es.pdf, p_b) / np.where(ok, es.pdf, 1.0)
                if not bsdf.transmissive:
                    ok &= (wl_l[:, 2] > 0) & (wo[:, 2] > 0)
                if not grating_pc:
                    ok &= bsdf.eval(wl_l, wo, lam) > 0
                tmax = np.where(np.isfinite(es.dist), es.dist - SHADOW_EPS, np.inf)
                idx = np.flatnonzero(ok)
                if len(idx):
                    idx = idx[~scene.occluded(pos[idx], es.wi[idx], tmax[idx])]
                # the floor lobe's pdf depends on wavelength: keep only the hero
                hero_only = disp[rows] | grating_pc
                for ei in np.unique(e_sel[idx]):
                    j = idx[e_sel[idx] == ei]
                    conns.add(NEE, rows[j], d, ei, es.wi[j], es.g[j], factor[j], es.dist[j],
                              hero_only[j])

            if ss and bsdf.is_grating:
                for ei in range(n_em):
                    e = emitters[ei]
                    if not isinstance(e, DistantEmitter):
                        continue
                    wl = np.broadcast_to(e.direction, (len(rows), 3)).copy()
                    wl_l = _to_local(frame, wl)
                    idx = np.flatnonzero((wl_l[:, 2] > 0) & (wo[:, 2] > 0))
                    if len(idx):
                        idx = idx[~scene.occluded(pos[idx], wl[idx], np.full(len(idx), np.inf))]
                    conns.add(BUNDLE, rows[idx], d, ei, wl[idx], e.irradiance, 1.0, np.inf,
                              disp[rows[idx]])

            if ms_targets and bsdf.has_nondelta:
                for ei in ms_targets:
                    _manifold_connect(scene, conns, bsdf, ei, ms_chain_ids[ei], rows, d, pos,
                                      frame, wo, lam, disp, rng)

            # continuation
            s = bsdf.sample(wo, lam, u[rows, 4:7], floor_cov=floor) if grating_pc else \
                bsdf.sample(wo, lam, u[rows, 4:7])
            weight = s.weight
            glossy = np.zeros(len(rows), bool)
            if grating_pc:
                glossy = s.lobe != LOBE_NONE
                weight = np.where(glossy, bsdf.delta_energy(wo, lam), 0.0)
            valid = (s.lobe != LOBE_NONE) & (s.pdf > 0) & (weight > 0) & np.isfinite(weight)
            cos_i = np.abs(s.wi[:, 2])
            scale = np.where(s.delta, 1.0, cos_i) / np.where(s.pdf > 0, s.pdf, 1.0)
            b = beta[rows] * np.where(valid, weight, 0.0)
            if d >= cfg.rr_depth:
                q = np.minimum(1.0, b)
                survive = u[rows, 7] < q
                valid &= survive
                qs = np.where(q > 0, q, 1.0)
                scale = scale / qs
                b = b / qs
            if d == cfg.max_depth:
                valid[:] = False
            vert.wi[sel] = s.wi
            vert.lobe[sel] = s.lobe
            vert.order[sel] = s.order
            vert.pdf[sel] = s.pdf
            vert.scale[sel] = scale
            vert.glossy_grating[sel] = glossy
            beta[rows] = b
            new_alive[rows] = valid
            orig[rows] = pos
            dirs[rows] = _to_world(frame, s.wi)
            prev_pdf[rows] = np.where(s.delta, 0.0, s.pdf)
            prev_nee[rows] = nee_here & ~s.delta
            prev_normal[rows] = nrm
            prev_grating[rows] = bsdf.is_grating
            disp[rows] |= s.dispersive | glossy
            # manifold bookkeeping: non-delta vertex, then refract, refract on one material
            st = ms_stage[rows]
            refr = s.lobe == LOBE_REFRACT
            new = np.where(~s.delta & bsdf.has_nondelta, 1,
                           np.where(refr & (st == 1), 2,
                                    np.where(refr & (st == 2) & (ms_mat[rows] == m), 3, 0)))
            ms_mat[rows] = np.where(new == 2, m, np.where(new == 3, ms_mat[rows], -1))
            ms_stage[rows] = new
        store.vertices.append(vert)
        alive[:] = new_alive
    return store, conns.build()


def _manifold_connect(scene, conns, bsdf, ei, chain_mat, rows, d, pos, frame, wo, lam, disp,
                      rng):
    e = scene.emitters[ei]
    chain_bsdf = scene.materials[chain_mat]
    m = len(rows)
    u = rng.random((m, 3))
    es = e.sample(pos, frame[:, :, 2], u)
    y, ny = es.point, es.normal
    dist = np.linalg.norm(y - pos, axis=1)
    w = (y - pos) / dist[:, None]
    # seed: the straight segment must cross two chain interfaces
    h1 = scene.intersect_batch(pos, w)
    ok = h1.hit & (h1.material == chain_mat) & (h1.t < dist)
    h2 = scene.intersect_batch(np.where(ok[:, None], h1.pos, pos), w)
    ok &= h2.hit & (h2.material == chain_mat) & (h1.t + h2.t < dist)
    idx = np.flatnonzero(ok)
    if not len(idx):
        return
    x, y, ny = pos[idx], y[idx], ny[idx]
    n1, n2 = h1.normal[idx], h2.normal[idx]
    t1, t2 = h1.tangent[idx], h2.tangent[idx]
    eta_in = np.real(chain_bsdf.ior(lam[idx]))
    chain = Chain(h1.pos[idx], t1, np.cross(n1, t1), n1, h2.pos[idx], t2, np.cross(n2, t2), n2,
                  eta_in, np.full(len(idx), chain_bsdf.ambient))
    uv0 = np.zeros((len(idx), 4))
    uv, conv = newton(chain, x, y, uv0)
    p1, p2 = chain.points(uv)
    good = conv.copy()
    # validate the solved chain against the actual geometry
    seg = [(x, p1), (p1, p2)]
    frames = []
    for a, b in seg:
        L = np.linalg.norm(b - a, axis=1)
        dd = (b - a) / np.maximum(L, 1e-300)[:, None]
        hh = scene.intersect_batch(a, dd)
        good &= hh.hit & (hh.material == chain_mat) & (np.abs(hh.t - L) < 1e-6 + 1e-6 * L)
        frames.append(np.stack([hh.tangent, np.cross(hh.normal, hh.tangent), hh.normal], -1))
    L3 = np.linalg.norm(y - p2, axis=1)
    d3 = (y - p2) / np.maximum(L3, 1e-300)[:, None]
    good &= -np.sum(d3 * ny, 1) > 1e-9
    wl = (p1 - x) / np.linalg.norm(p1 - x, axis=1, keepdims=True)
    wl_l = _to_local(frame[idx], wl)
    if not bsdf.transmissive:
        good &= (wl_l[:, 2] > 0) & (wo[idx, 2] > 0)
    j = np.flatnonzero(good)
    if len(j):
        j = j[~scene.occluded(p2[j], d3[j], L3[j] - SHADOW_EPS)]
    if not len(j):
        return
    sub = chain.subset(j)
    jac = generalized_jacobian(sub, x[j], wl[j], y[j], ny[j])
    spread = np.linalg.norm(sub.c2 - sub.c1, axis=1) + 1e-6
    inv_p = reciprocal_probability(sub, x[j], y[j], uv[j], uv0[j], spread, rng)
    factor = np.where(jac > 0, inv_p * e.total_area / np.where(jac > 0, jac, 1.0), 0.0)
    r = rows[idx[j]]
    hero_only = disp[r] | chain_bsdf.ior.dispersive
    g = e.radiance_hit(-np.sum(d3[j] * ny[j], 1))
    conns.add(MS, r, d, ei, wl[j], g, factor, L3[j], hero_only,
              ms=(p1[j], frames[0][j], p2[j], frames[1][j], np.full(len(j), chain_mat, np.int32), y[j]))
