"""Manifold next-event estimation through chains of two refracting interfaces.

Interface points are parametrised in the tangent planes of the triangles
hit by the seed segment. At each interface the constraint is the tangential
part of the generalised half-vector ``eta_a w_a + eta_b w_b`` (zero exactly
when Snell's law holds). Newton iterations use a finite-difference
Jacobian and are vectorised over connections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-5
MAX_ITERS = 20
MAX_RESTARTS = 32


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass
class Chain:
    """Planar description of a two-interface chain, one row per connection."""

    c1: np.ndarray   # plane origins
    t1: np.ndarray
    b1: np.ndarray
    n1: np.ndarray
    c2: np.ndarray
    t2: np.ndarray
    b2: np.ndarray
    n2: np.ndarray
    eta_in: np.ndarray    # index inside the chain material (real)
    eta_out: np.ndarray   # ambient index

    def points(self, uv):
        p1 = self.c1 + uv[:, :1] * self.t1 + uv[:, 1:2] * self.b1
        p2 = self.c2 + uv[:, 2:3] * self.t2 + uv[:, 3:4] * self.b2
        return p1, p2

    def side_eta(self, point, origin, normal):
        outside = np.sum((point - origin) * normal, -1) > 0
        return np.where(outside, self.eta_out, self.eta_in)

    def subset(self, m):
        return Chain(*(getattr(self, f)[m] for f in self.__dataclass_fields__))


def constraint(chain: Chain, x, y, uv):
    p1, p2 = chain.points(uv)
    out = np.empty((len(uv), 4))
    for k, (p, prev, nxt, c, t, b, n) in enumerate((
            (p1, x, p2, chain.c1, chain.t1, chain.b1, chain.n1),
            (p2, p1, y, chain.c2, chain.t2, chain.b2, chain.n2))):
        wa, wb = _unit(prev - p), _unit(nxt - p)
        eta_a = chain.side_eta(prev, c, n)
        eta_b = chain.side_eta(nxt, c, n)
        h = eta_a[:, None] * wa + eta_b[:, None] * wb
        out[:, 2 * k] = np.sum(h * t, -1)
        out[:, 2 * k + 1] = np.sum(h * b, -1)
    return out


def newton(chain: Chain, x, y, uv0, tol=TOL, max_iters=MAX_ITERS):
    """Solve the chain constraint; returns (uv, converged)."""
    uv = uv0.copy()
    n = len(uv)
    scale = np.maximum(np.linalg.norm(y - x, axis=-1), 1e-6)
    h = 1e-7 * scale
    active = np.ones(n, bool)
    conv = np.zeros(n, bool)
    c = constraint(chain, x, y, uv)
    for _ in range(max_iters + 1):
        norm = np.linalg.norm(c, axis=1)
        newly = active & (norm < tol)
        conv |= newly
        active &= ~newly
        if not active.any():
            break
        idx = np.flatnonzero(active)
        sub = chain.subset(idx)
        jac = np.empty((len(idx), 4, 4))
        for j in range(4):
            d = uv[idx].copy()
            d[:, j] += h[idx]
            jac[:, :, j] = (constraint(sub, x[idx], y[idx], d) - c[idx]) / h[idx, None]
        ok = np.abs(np.linalg.det(jac)) > 1e-300
        step = np.zeros((len(idx), 4))
        step[ok] = np.linalg.solve(jac[ok], -c[idx][ok][..., None])[..., 0]
        # damped update: halve until the residual decreases
        base = norm[idx]
        lam = np.ones(len(idx))
        trial = uv[idx] + step
        ct = constraint(sub, x[idx], y[idx], trial)
        for _ in range(6):
            worse = np.linalg.norm(ct, axis=1) > base
            if not worse.any():
                break
            lam[worse] *= 0.5
            trial[worse] = uv[idx][worse] + lam[worse, None] * step[worse]
            ct[worse] = constraint(sub.subset(worse), x[idx][worse], y[idx][worse], trial[worse])
        uv[idx] = trial
        c[idx] = ct
        active[idx[~ok]] = False
    # one polishing step on converged rows
    idx = np.flatnonzero(conv)
    if len(idx):
        sub = chain.subset(idx)
        jac = np.empty((len(idx), 4, 4))
        for j in range(4):
            d = uv[idx].copy()
            d[:, j] += h[idx]
            jac[:, :, j] = (constraint(sub, x[idx], y[idx], d) - c[idx]) / h[idx, None]
        ok = np.abs(np.linalg.det(jac)) > 1e-300
        polished = uv[idx].copy()
        polished[ok] += np.linalg.solve(jac[ok], -c[idx][ok][..., None])[..., 0]
        better = np.linalg.norm(constraint(sub, x[idx], y[idx], polished), axis=1) <= \
            np.linalg.norm(c[idx], axis=1)
        uv[idx[better]] = polished[better]
    return uv, conv


def refract(d, n, eta_i, eta_t):
    """Refract propagation direction ``d`` at a plane with normal ``n``; nan on TIR."""
    cos_i = -np.sum(d * n, -1)
    flip = cos_i < 0
    n = np.where(flip[:, None], -n, n)
    cos_i = np.abs(cos_i)
    r = eta_i / eta_t
    k = 1 - r**2 * (1 - cos_i**2)
    out = r[:, None] * d + (r * cos_i - np.sqrt(np.where(k >= 0, k, np.nan)))[:, None] * n
    return out


def _plane_hit(o, d, c, n):
    t = np.sum((c - o) * n, -1) / np.sum(d * n, -1)
    return o + t[:, None] * d


def trace_chain(chain: Chain, x, d, light_c, light_n):
    """Follow direction ``d`` from ``x`` through both planes to the light plane."""
    p1 = _plane_hit(x, d, chain.c1, chain.n1)
    d1 = refract(d, chain.n1, chain.side_eta(x, chain.c1, chain.n1),
                 chain.side_eta(x + 2 * (p1 - x), chain.c1, chain.n1))
    p2 = _plane_hit(p1, d1, chain.c2, chain.n2)
    d2 = refract(d1, chain.n2, chain.side_eta(p1, chain.c2, chain.n2),
                 chain.side_eta(p1 + 2 * (p2 - p1), chain.c2, chain.n2))
    return _plane_hit(p2, d2, light_c, light_n)


def generalized_jacobian(chain: Chain, x, d, light_c, light_n, eps=1e-6):
    """|dA_y / d omega_x|: light-plane area per unit solid angle at ``x``."""
    a = np.where(np.abs(d[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = _unit(np.cross(d, a))
    e2 = np.cross(d, e1)
    dy = []
    for e in (e1, e2):
        yp = trace_chain(chain, x, _unit(d + eps * e), light_c, light_n)
        ym = trace_chain(chain, x, _unit(d - eps * e), light_c, light_n)
        dy.append((yp - ym) / (2 * eps))
    return np.linalg.norm(np.cross(dy[0], dy[1]), axis=-1)


def reciprocal_probability(chain: Chain, x, y, uv_ref, seed_uv, spread, rng,
                           max_restarts=MAX_RESTARTS):
    """Count independent jittered restarts until the reference solution is
    found again (geometric estimate of 1/p, capped)."""
    n = len(x)
    count = np.ones(n)
    pending = np.ones(n, bool)
    p_ref = np.concatenate(chain.points(uv_ref), -1)
    for trial in range(1, max_restarts + 1):
        idx = np.flatnonzero(pending)
        if not len(idx):
            break
        jitter = rng.normal(size=(len(idx), 4)) * spread[idx, None]
        uv, conv = newton(chain.subset(idx), x[idx], y[idx], seed_uv[idx] + jitter)
        p = np.concatenate(chain.subset(idx).points(uv), -1)
        same = conv & (np.linalg.norm(p - p_ref[idx], axis=1) < 1e-6 * (1 + spread[idx]))
        count[idx[same]] = trial
        pending[idx[same]] = False
        count[idx[~same]] = trial + 1
    return np.minimum(count, max_restarts)


def solve_planar_slab(x, y, thickness, eta, top=0.0):
    """Closed-form-style oracle: refraction points of the straight-through path
    from ``x`` (above the top face at height ``top``) to ``y`` (below the
    bottom face) across a horizontal slab. Returns (p_top, p_bottom)."""
    from scipy.optimize import brentq

    x = np.asarray(x, float)
    y = np.asarray(y, float)
    bottom = top - thickness
    hx = x[2] - top
    hy = bottom - y[2]
    horiz = y[:2] - x[:2]
    dist = np.linalg.norm(horiz)
    if dist == 0:
        return np.array([*x[:2], top]), np.array([*x[:2], bottom])
    u = horiz / dist

    def residual(s):   # s = sin of the angle in air above
        t_air = s / np.sqrt(1 - s * s)
        sg = s / eta
        t_glass = sg / np.sqrt(1 - sg * sg)
        return hx * t_air + thickness * t_glass + hy * t_air - dist

    s = brentq(residual, 0.0, 1 - 1e-15, xtol=1e-16, rtol=1e-15)
    a = hx * s / np.sqrt(1 - s * s)
    sg = s / eta
    g = thickness * sg / np.sqrt(1 - sg * sg)
    p_top = np.array([*(x[:2] + a * u), top])
    p_bot = np.array([*(x[:2] + (a + g) * u), bottom])
    return p_top, p_bot
