"""Solve stage: forward Mueller walk from the light to the sensor.

Every connection row carries a hero wavelength plus three secondaries
drawn from the connected emitter's spectrum. The Stokes vector starts
unpolarised at the light and is rotated into each vertex's canonical
incident frame before that vertex's Mueller matrix is applied.
"""
from __future__ import annotations

import numpy as np

from ..bsdf.base import LOBE_DIFFUSE, LOBE_GLOSSY, LOBE_REFRACT, frame_angle, stokes_x
from ..spectral import (LAMBDA_RANGE, cmf, emission_sampler, rotation_mueller, xyz_to_rgb,
                        y_normalisation)
from .wavefront import BUNDLE, MS, ORGANIC, Connections, PathStore, _to_local

N_LAMBDA = 4


def wavelengths(store: PathStore, conns: Connections, emitters):
    """Per-row wavelengths (m, 4) and spectral estimator weights (m, 4)."""
    m = len(conns)
    u0 = store.u0[conns.row]
    lam = np.empty((m, N_LAMBDA))
    wts = np.empty((m, N_LAMBDA))
    lam[:, 0] = store.hero[conns.row]
    p_u = 1.0 / LAMBDA_RANGE
    for ei in np.unique(conns.emitter):
        sel = conns.emitter == ei
        sampler = emission_sampler(emitters[ei].spectrum)
        for k in range(1, N_LAMBDA):
            lam[sel, k], _ = sampler.sample((u0[sel] + k / N_LAMBDA) % 1.0)
        p_e = sampler.pdf(lam[sel])
        wts[sel] = 1.0 / (p_u + (N_LAMBDA - 1) * p_e)
    hero_only = conns.disp
    wts[hero_only, 0] = 1.0 / p_u
    wts[hero_only, 1:] = 0.0
    return lam, wts


def _apply(S, prev_x, idx, frame, wi_l, wo_l, M):
    """Rotate into the incident frame of a vertex, apply ``M``, record the exit frame."""
    prop = -np.einsum("nij,nj->ni", frame, wi_l)
    x_in = np.einsum("nij,nj->ni", frame, stokes_x(wi_l))
    px = prev_x[idx]
    first = np.isnan(px[:, 0])
    phi = np.where(first, 0.0, frame_angle(prop, np.where(first[:, None], x_in, px), x_in))
    s = np.einsum("nij,nlj->nli", rotation_mueller(phi), S[idx])
    S[idx] = np.einsum("nlij,nlj->nli", M, s)
    prev_x[idx] = np.einsum("nij,nj->ni", frame, stokes_x(wo_l))


def _floor(cfg, lam):
    """Per-wavelength pc-baseline covariance, shape lam.shape + (2, 2)."""
    return cfg.floor_cov(lam)[..., None, None] * np.eye(2)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def solve(scene, cfg, store: PathStore, conns: Connections, stokes=False):
    """Evaluate all connections; returns (path row (m,), linear RGB (m, 3)).

    With ``stokes`` the per-wavelength Stokes vectors (m, L, 4) at the sensor
    are appended, before MIS and wavelength weights."""
    m = len(conns)
    if m == 0:
        empty = (np.zeros(0, np.int64), np.zeros((0, 3)))
        return empty + (np.zeros((0, N_LAMBDA, 4)),) if stokes else empty
    emitters = scene.emitters
    pcb = cfg.mode == "pc-baseline"
    lam, wts = wavelengths(store, conns, emitters)
    S = np.zeros((m, N_LAMBDA, 4))
    for ei in np.unique(conns.emitter):
        sel = conns.emitter == ei
        S[sel, :, 0] = conns.g[sel, None] * emitters[ei].spectrum(lam[sel])
    prev_x = np.full((m, 3), np.nan)

    # manifold interface vertices, nearest the light first
    ms = np.flatnonzero(conns.kind == MS)
    for mat in np.unique(conns.ms_mat[ms]):
        rows = ms[conns.ms_mat[ms] == mat]
        diel = scene.materials[mat]
        xs = np.empty((len(rows), 3))
        for d in np.unique(conns.last[rows]):
            sel = conns.last[rows] == d
            v = store.vertices[d - 1]
            xs[sel] = v.pos[v.index(conns.row[rows[sel]])]
        p1, p2 = conns.ms_p1[rows], conns.ms_p2[rows]
        f1, f2 = conns.ms_f1[rows], conns.ms_f2[rows]
        lobe = np.full(len(rows), LOBE_REFRACT)
        wi2, wo2 = _to_local(f2, _unit(conns.ms_y[rows] - p2)), _to_local(f2, _unit(p1 - p2))
        _apply(S, prev_x, rows, f2, wi2, wo2, diel.delta_mueller(wi2, wo2, lobe, None, lam[rows]))
        wi1, wo1 = _to_local(f1, _unit(p2 - p1)), _to_local(f1, _unit(xs - p1))
        _apply(S, prev_x, rows, f1, wi1, wo1, diel.delta_mueller(wi1, wo1, lobe, None, lam[rows]))

    # connecting vertex for NEE / BUNDLE / MS rows
    conn_rows = np.flatnonzero(conns.kind != ORGANIC)
    for d in np.unique(conns.last[conn_rows]):
        rows_d = conn_rows[conns.last[conn_rows] == d]
        v = store.vertices[d - 1]
        vi = v.index(conns.row[rows_d])
        for mat in np.unique(v.material[vi]):
            s = v.material[vi] == mat
            rows, k = rows_d[s], vi[s]
            bsdf = scene.materials[mat]
            frame, wo = v.frame[k], v.wo[k]
            wi = _to_local(frame, conns.wl[rows])
            cos = np.abs(wi[:, 2])
            kind = conns.kind[rows]
            M = np.zeros((len(rows), N_LAMBDA, 4, 4))
            pc = kind == BUNDLE
            if pc.any():
                c = np.array([emitters[e].solid_angle for e in conns.emitter[rows[pc]]])
                M[pc] = bsdf.pc_mueller(wi[pc], wo[pc], c[:, None, None] * np.eye(2) / (2 * np.pi),
                                        lam[rows[pc]])
            if pcb and bsdf.is_grating:
                pc = np.ones(len(rows), bool)
                M[:] = bsdf.pc_mueller(wi, wo, _floor(cfg, lam[rows]), lam[rows])
            if (~pc).any():
                M[~pc] = bsdf.eval_mueller(wi[~pc], wo[~pc], lam[rows[~pc]])
            M *= (cos * conns.factor[rows])[:, None, None, None]
            _apply(S, prev_x, rows, frame, wi, wo, M)

    # organic rows: the stored vertex at ``last`` is a continuation vertex
    start = np.where(conns.kind == ORGANIC, conns.last, conns.last - 1)
    org = np.flatnonzero(conns.kind == ORGANIC)
    S[org] *= conns.factor[org, None, None]
    for d in range(int(start.max(initial=0)), 0, -1):
        rows_d = np.flatnonzero(start >= d)
        v = store.vertices[d - 1]
        vi = v.index(conns.row[rows_d])
        for mat in np.unique(v.material[vi]):
            s = v.material[vi] == mat
            rows, k = rows_d[s], vi[s]
            bsdf = scene.materials[mat]
            frame, wo, wi = v.frame[k], v.wo[k], v.wi[k]
            lobe = v.lobe[k]
            nondelta = (lobe == LOBE_DIFFUSE) | (lobe == LOBE_GLOSSY)
            glossy_g = v.glossy_grating[k]
            M = np.zeros((len(rows), N_LAMBDA, 4, 4))
            if glossy_g.any():
                lg = lam[rows[glossy_g]]
                M[glossy_g] = bsdf.pc_mueller(wi[glossy_g], wo[glossy_g], _floor(cfg, lg), lg)
            plain = nondelta & ~glossy_g
            if plain.any():
                M[plain] = bsdf.eval_mueller(wi[plain], wo[plain], lam[rows[plain]])
            if (~nondelta).any():
                dl = ~nondelta
                M[dl] = bsdf.delta_mueller(wi[dl], wo[dl], lobe[dl], v.order[k][dl], lam[rows[dl]])
            M *= v.scale[k][:, None, None, None]
            _apply(S, prev_x, rows, frame, wi, wo, M)

    value = S[..., 0] * wts
    xyz = np.einsum("nl,nlc->nc", value, cmf(lam)) / y_normalisation()
    rgb = xyz_to_rgb(xyz)
    bad = ~np.all(np.isfinite(rgb), axis=1)
    if bad.any():
        rgb[bad] = 0.0
    if stokes:
        return conns.row, rgb, S
    return conns.row, rgb
