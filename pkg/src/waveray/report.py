"""Convergence comparison across transport modes, with CSV and figure output.

MSE is measured on linear RGB over a pixel rectangle against a reference
rendered at ``ref_factor`` times the largest ladder spp. Sample-solve and
fully-coherent share one expectation and therefore one (sample-solve)
reference; pc-baseline is its own family with its own reference.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .integrator import MODES, RenderConfig, render
from .io import write_csv, write_png

CSV_HEADER = ("mode", "spp", "mse", "seconds")
REFERENCE_SEED_OFFSET = 1_000_003


def family(mode: str) -> str:
    """Mode whose render serves as the reference for ``mode``."""
    return "pc-baseline" if mode == "pc-baseline" else "sample-solve"


@dataclass
class CompareReport:
    roi: tuple
    rows: list = field(default_factory=list)          # (mode, spp, mse, seconds)
    references: dict = field(default_factory=dict)    # family -> (H, W, 3) ROI crop
    images: dict = field(default_factory=dict)        # mode -> ROI crop at the largest spp

    def modes(self):
        return list(dict.fromkeys(r[0] for r in self.rows))

    def series(self, mode):
        """(spp, mse, seconds) arrays for ``mode`` in ladder order."""
        sel = [r for r in self.rows if r[0] == mode]
        if not sel:
            raise KeyError(mode)
        return tuple(np.array([r[k] for r in sel], float) for k in (1, 2, 3))

    def mse(self, mode, spp):
        s, m, _ = self.series(mode)
        hit = np.flatnonzero(s == spp)
        if not hit.size:
            raise KeyError(f"{mode} has no {spp} spp entry")
        return float(m[hit[0]])

    def fit_constant(self, mode) -> float:
        """Least-squares c in MSE = c / spp."""
        s, m, _ = self.series(mode)
        return float(np.sum(m / s) / np.sum(1.0 / s**2))

    def equal_mse_ratio(self, mode, baseline, at_spp=None) -> float:
        """spp ``mode`` needs to match ``baseline``'s MSE, divided by baseline's spp.

        Without ``at_spp`` the ratio of the fitted constants is returned. With
        ``at_spp`` the target is baseline's measured MSE at that spp; the spp
        that ``mode`` needs is read off its log-log curve, or extrapolated with
        the c/spp fit when the target lies outside the measured range.
        """
        if at_spp is None:
            return self.fit_constant(mode) / self.fit_constant(baseline)
        target = self.mse(baseline, at_spp)
        s, m, _ = self.series(mode)
        ls, lm = np.log(s), np.log(m)
        lt = np.log(target)
        for i in range(len(s) - 1):
            lo, hi = sorted((lm[i], lm[i + 1]))
            if lo <= lt <= hi and lm[i] != lm[i + 1]:
                t = (lt - lm[i]) / (lm[i + 1] - lm[i])
                return float(np.exp(ls[i] + t * (ls[i + 1] - ls[i]))) / at_spp
        return self.fit_constant(mode) / target / at_spp


def _crop(image, roi):
    x, y, w, h = roi
    return image[y:y + h, x:x + w]


def mse(image, reference) -> float:
    return float(np.mean((np.asarray(image) - np.asarray(reference)) ** 2))


def run_compare(scene, ladder, roi=None, modes=MODES, config: RenderConfig | None = None,
                reference=None, ref_factor: int = 64, log=None) -> CompareReport:
    """Render every mode over the spp ladder with common seeds and score it.

    ``reference`` may be a full-resolution image used for every mode; when
    omitted one reference per mode family is rendered in-run.
    """
    cfg = config or RenderConfig()
    ladder = [int(s) for s in ladder]
    if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 1:
        raise ValueError("ladder must be strictly increasing positive spp values")
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}; valid: {', '.join(MODES)}")
    if roi is None:
        w, h = cfg.resolution or scene.camera.resolution
        roi = (0, 0, int(w), int(h))
    roi = tuple(int(v) for v in roi)
    cfg = dataclasses.replace(cfg, roi=roi)
    rep = CompareReport(roi)

    for fam in dict.fromkeys(family(m) for m in modes):
        if reference is not None:
            rep.references[fam] = _crop(np.asarray(reference, float), roi)
            continue
        rc = dataclasses.replace(cfg, mode=fam, spp=ref_factor * ladder[-1],
                                 seed=cfg.seed + REFERENCE_SEED_OFFSET)
        res = render(scene, rc)
        rep.references[fam] = _crop(res.image, roi)
        if log:
            log(f"reference {fam}: {rc.spp} spp, {res.seconds:.1f} s")

    for m in modes:
        for spp in ladder:
            res = render(scene, dataclasses.replace(cfg, mode=m, spp=spp))
            crop = _crop(res.image, roi)
            err = mse(crop, rep.references[family(m)])
            rep.rows.append((m, spp, err, res.seconds))
            if log:
                log(f"{m:15s} {spp:7d} spp  mse {err:.4e}  {res.seconds:.2f} s")
        rep.images[m] = crop
    return rep


def write_report(rep: CompareReport, csv_path, exposure: float = 0.0) -> list:
    """Write the CSV plus figures next to it; returns the written paths."""
    csv_path = Path(csv_path)
    write_csv(csv_path, CSV_HEADER, [(m, s, f"{e:.9e}", f"{t:.4f}") for m, s, e, t in rep.rows])
    written = [csv_path]
    if str(csv_path) == "-":
        return written
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stem = csv_path.with_suffix("")
    fig, ax = plt.subplots(figsize=(5, 4))
    for m in rep.modes():
        s, e, _ = rep.series(m)
        ax.loglog(s, e, "o-", label=m)
    ax.set_xlabel("samples per pixel")
    ax.set_ylabel("MSE (linear RGB)")
    ax.set_title(f"ROI {rep.roi}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(f"{stem}_mse.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    for name, img in list(rep.references.items()) + list(rep.images.items()):
        tag = "ref" if name in rep.references and img is rep.references[name] else "roi"
        path = Path(f"{stem}_{tag}_{name}.png")
        write_png(path, img, exposure)
        written.append(path)
    return written
