"""Command-line entry points: render, compare, wdf-lab."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import phasespace as ps
from .integrator import DEFAULT_THETA_FLOOR, MODES, RenderConfig, render
from .io import read_field, write_csv, write_pfm, write_png
from .scene import SceneError, bundled_scene_path, load_scene

WDF_OPS = ("wdf", "csd", "marginal", "uncertainty", "smooth", "propagate", "decompose")
WDF_SOURCES = ("gaussian", "two-point", "file")


class UsageError(Exception):
    pass


def _ints(text, n=None, sep=","):
    try:
        vals = [int(v) for v in text.replace("x", sep).split(sep)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} integers, got {text!r}")
    return tuple(vals)


def _resolution(text):
    vals = _ints(text.lower(), 2, "x")
    if min(vals) < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return vals


def _roi(text):
    return _ints(text, 4)


def _ladder(text):
    return list(_ints(text))


def _resolve_scene(name):
    """A scene file path, or the name of a bundled scene."""
    path = Path(name)
    if path.exists():
        return path
    if path.suffix == "" and path.parent == Path("."):
        try:
            return bundled_scene_path(name)
        except FileNotFoundError:
            pass
    raise UsageError(f"scene file not found: {name}")


def _config(args, **over):
    kw = dict(mode=args.mode, spp=args.spp, seed=args.seed, max_depth=args.max_depth,
              resolution=args.resolution, theta_floor=args.theta_floor, roi=args.roi,
              threads=args.threads, manifold=not args.no_manifold)
    kw.update(over)
    try:
        return RenderConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args):
    try:
        return load_scene(_resolve_scene(args.scene))
    except (SceneError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from None


def cmd_render(args) -> int:
    scene = _load(args)
    cfg = _config(args)
    try:
        res = render(scene, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pfm(out, res.image)
    write_png(out.with_suffix(".png"), res.image, args.exposure)
    print(f"seed {cfg.seed} spp {cfg.spp} mode {cfg.mode} time {res.seconds:.3f} s -> {out}")
    return 0


def cmd_compare(args) -> int:
    from .io import read_pfm
    from .report import run_compare, write_report

    scene = _load(args)
    cfg = _config(args)
    ref = None
    if args.reference:
        try:
            ref = read_pfm(args.reference)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read reference {args.reference}: {exc}") from None
    modes = tuple(args.modes.split(",")) if args.modes else MODES
    try:
        rep = run_compare(scene, args.ladder, args.roi, modes, cfg, ref, args.ref_factor,
                          log=lambda s: print(s, file=sys.stderr))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = write_report(rep, args.out, args.exposure)
    if "sample-solve" in rep.modes():
        for m in rep.modes():
            if m != "sample-solve":
                print(f"equal-MSE spp ratio {m}/sample-solve: "
                      f"{rep.equal_mse_ratio(m, 'sample-solve'):.2f}")
    print(f"seed {cfg.seed} ladder {','.join(map(str, args.ladder))} roi {rep.roi} -> "
          + ", ".join(map(str, paths)))
    return 0


# ---------------------------------------------------------------------------
# wdf-lab
# ---------------------------------------------------------------------------

def _field(args):
    if args.source == "gaussian":
        dr = args.dr or args.sigma / 4
        grid = ps.Grid1D.centred(args.n, dr)
        return ps.gaussian_field(grid, args.sigma, k0=args.k_center)
    if args.source == "two-point":
        dr = args.dr or args.width / 2
        grid = ps.Grid1D.centred(args.n, dr)
        return ps.two_point_field(grid, args.separation, args.width)
    if not args.input:
        raise UsageError("source 'file' needs --input")
    try:
        r, values = read_field(args.input)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from None
    if r is None:
        if not args.dr:
            raise UsageError("a CSD input needs --dr")
        return ps.CSDMatrix(values, ps.Grid1D(values.shape[0], args.dr))
    return ps.Field1D(values, ps.Grid1D(len(r), float(r[1] - r[0]), float(r[0])))


def _csd(obj):
    if isinstance(obj, ps.CSDMatrix):
        return obj
    return ps.csd_from_ensemble([obj])


def _grid_rows(w: ps.WDFGrid):
    rr, kk = np.meshgrid(w.r, w.k, indexing="ij")
    return zip(rr.ravel(), kk.ravel(), w.w.ravel())


def cmd_wdf_lab(args) -> int:
    obj = _field(args)
    csd = _csd(obj)
    out = args.out
    try:
        if args.op == "csd":
            r = csd.grid.r
            i, j = np.meshgrid(np.arange(len(r)), np.arange(len(r)), indexing="ij")
            rows = ((r[a], r[b], csd.c[a, b].real, csd.c[a, b].imag)
                    for a, b in zip(i.ravel(), j.ravel()))
            write_csv(out, ("r1", "r2", "re", "im"), rows)
        elif args.op == "uncertainty":
            if not isinstance(obj, ps.Field1D):
                raise UsageError("uncertainty needs a field, not a CSD")
            sr, sk, prod = ps.uncertainty_product(obj)
            write_csv(out, ("sigma_r", "sigma_k", "product"), [(sr, sk, prod)])
        else:
            w = ps.wdf_from_csd(csd)
            if args.op == "wdf":
                write_csv(out, ("r", "k", "w"), _grid_rows(w))
            elif args.op == "marginal":
                write_csv(out, ("r", "intensity"), zip(w.grid.r, ps.intensity_marginal(w)))
            elif args.op == "smooth":
                write_csv(out, ("r", "k", "w"), _grid_rows(ps.husimi_smooth(w, ps.default_cell(w.grid))))
            elif args.op == "propagate":
                k0 = 2 * np.pi / args.wavelength
                write_csv(out, ("r", "k", "w"), _grid_rows(ps.propagate_free_space(w, args.distance, k0)))
            elif args.op == "decompose":
                cell = ps.default_cell(w.grid)
                dec = ps.decompose_into_rays(ps.husimi_smooth(w, cell), args.n_rays)
                write_csv(out, ("mean_r", "mean_k", "sigma_r", "sigma_k", "weight"),
                          [(g.mean_r, g.mean_k, g.sigma_r, g.sigma_k, g.weight) for g in dec.rays])
                print(f"rays {len(dec.rays)} residual {dec.residual:.3e}", file=sys.stderr)
    except ps.PhaseSpaceError as exc:
        raise UsageError(str(exc)) from None
    return 0


# ---------------------------------------------------------------------------

def _render_flags(p, default_out):
    p.add_argument("scene", help="scene file, or the name of a bundled scene")
    p.add_argument("--spp", type=int, default=16)
    p.add_argument("--resolution", type=_resolution, default=None, metavar="WxH")
    p.add_argument("--mode", choices=MODES, default="sample-solve")
    p.add_argument("--theta-floor", type=float, default=DEFAULT_THETA_FLOOR, metavar="M2",
                   help="pc-baseline coherence-area floor in m^2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--roi", type=_roi, default=None, metavar="x,y,w,h")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: WAVERAY_THREADS or all cores)")
    p.add_argument("--no-manifold", action="store_true", help="disable manifold next-event")
    p.add_argument("--exposure", type=float, default=0.0, help="preview exposure in stops")
    p.add_argument("--out", default=default_out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="waveray", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene to PFM plus a PNG preview")
    _render_flags(p, "render.pfm")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", help="MSE against spp for each mode over a region")
    _render_flags(p, "compare.csv")
    p.add_argument("--ladder", type=_ladder, default=[1, 4, 16, 64], metavar="1,4,16,...")
    p.add_argument("--modes", default=None, help="comma-separated subset of modes")
    p.add_argument("--reference", default=None, help="reference PFM (default: rendered in-run)")
    p.add_argument("--ref-factor", type=int, default=64)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("wdf-lab", help="phase-space experiments on 1-D fields")
    p.add_argument("source", choices=WDF_SOURCES)
    p.add_argument("--op", choices=WDF_OPS, default="wdf")
    p.add_argument("--sigma", type=float, default=1e-4, help="gaussian width (m)")
    p.add_argument("--k-center", type=float, default=0.0)
    p.add_argument("--separation", type=float, default=4e-4)
    p.add_argument("--width", type=float, default=2e-5)
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--dr", type=float, default=None)
    p.add_argument("--input", default=None, help="field or CSD table for source 'file'")
    p.add_argument("--distance", type=float, default=0.1)
    p.add_argument("--wavelength", type=float, default=550e-9)
    p.add_argument("--n-rays", type=int, default=64)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_wdf_lab)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"waveray {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.command != "render":
        print(f"done in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
