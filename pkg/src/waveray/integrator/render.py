"""Image driver: tiles, batches, threads and per-pixel statistics."""
from __future__ import annotations

import copy
import dataclasses
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RenderConfig
from .solve import solve
from .wavefront import CONN_NAMES, trace_batch


@dataclass
class RenderResult:
    image: np.ndarray        # (H, W, 3) mean linear RGB
    sum: np.ndarray
    sumsq: np.ndarray
    count: np.ndarray        # (H, W) samples per pixel
    seconds: float
    connections: dict

    @property
    def variance(self):
        """Per-pixel sample variance of the RGB estimate (H, W, 3)."""
        n = np.maximum(self.count, 1)[..., None]
        mean = self.sum / n
        return np.maximum(self.sumsq / n - mean**2, 0.0) / np.maximum(n - 1, 1)

    def roi_mean(self, roi):
        x, y, w, h = roi
        return self.image[y:y + h, x:x + w].reshape(-1, 3).mean(0)


def _scene_for(scene, cfg: RenderConfig):
    if cfg.resolution is None or tuple(cfg.resolution) == scene.camera.resolution:
        return scene
    w, h = cfg.resolution
    cam = dataclasses.replace(scene.camera, width=int(w), height=int(h), up=scene.camera.up)
    out = copy.copy(scene)   # shares the acceleration structure
    out.camera = cam
    return out


def _tiles(width, height, tile, roi):
    x0, y0, x1, y1 = 0, 0, width, height
    if roi is not None:
        rx, ry, rw, rh = roi
        x0, y0 = max(0, rx), max(0, ry)
        x1, y1 = min(width, rx + rw), min(height, ry + rh)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"region of interest {roi} lies outside the {width}x{height} image")
    out = []
    for ty in range(0, height, tile):
        for tx in range(0, width, tile):
            xs = np.arange(max(tx, x0), min(tx + tile, x1))
            ys = np.arange(max(ty, y0), min(ty + tile, y1))
            if len(xs) and len(ys):
                out.append((ty // tile * ((width + tile - 1) // tile) + tx // tile, xs, ys))
    return out


def render_tile(scene, cfg: RenderConfig, tile_id, xs, ys):
    """Render one tile; returns per-pixel (sum, sumsq, count, connection counts)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, tile_id])))
    gx, gy = np.meshgrid(xs, ys)
    px, py = gx.ravel(), gy.ravel()
    npx = len(px)
    s_sum = np.zeros((npx, 3))
    s_sq = np.zeros((npx, 3))
    counts = {name: 0 for name in CONN_NAMES.values()}
    per_batch = max(1, cfg.batch_size // npx)
    for s0 in range(0, cfg.spp, per_batch):
        ns = min(per_batch, cfg.spp - s0)
        sample = np.repeat(np.arange(s0, s0 + ns), npx)
        pix = np.tile(np.arange(npx), ns)
        store, conns = trace_batch(scene, cfg, px[pix], py[pix], sample, rng)
        rows, rgb = solve(scene, cfg, store, conns)
        for k, name in CONN_NAMES.items():
            counts[name] += int(np.sum(conns.kind == k))
        per_path = np.zeros((len(pix), 3))
        np.add.at(per_path, rows, rgb)
        bad = ~np.all(np.isfinite(per_path), axis=1)
        if bad.any():
            warnings.warn(f"{int(bad.sum())} non-finite samples zeroed", RuntimeWarning,
                          stacklevel=2)
            per_path[bad] = 0.0
        np.add.at(s_sum, pix, per_path)
        np.add.at(s_sq, pix, per_path**2)
    return s_sum, s_sq, counts


def render(scene, config: RenderConfig | None = None) -> RenderResult:
    """Render ``scene``; pixels outside ``config.roi`` stay zero."""
    cfg = config or RenderConfig()
    scene = _scene_for(scene, cfg)
    width, height = scene.camera.resolution
    tiles = _tiles(width, height, cfg.tile, cfg.roi)
    t0 = time.perf_counter()
    workers = min(cfg.workers(), max(1, len(tiles)))
    if workers == 1:
        results = [render_tile(scene, cfg, *t) for t in tiles]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda t: render_tile(scene, cfg, *t), tiles))
    total = np.zeros((height, width, 3))
    total_sq = np.zeros((height, width, 3))
    count = np.zeros((height, width))
    conn = {name: 0 for name in CONN_NAMES.values()}
    for (tid, xs, ys), (s_sum, s_sq, c) in zip(tiles, results):   # fixed tile order
        sl = (slice(ys[0], ys[-1] + 1), slice(xs[0], xs[-1] + 1))
        total[sl] += s_sum.reshape(len(ys), len(xs), 3)
        total_sq[sl] += s_sq.reshape(len(ys), len(xs), 3)
        count[sl] += cfg.spp
        for k, v in c.items():
            conn[k] += v
    image = total / np.maximum(count, 1)[..., None]
    return RenderResult(image, total, total_sq, count, time.perf_counter() - t0, conn)
