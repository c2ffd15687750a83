"""Scene-file reader.

Grammar (``#`` starts a comment; statements end at a newline or ``;``)::

    scene { min_feature 0.005 }
    camera { position 0 -1 0.5; look_at 0 0 0; up 0 0 1; fov 40; resolution 128 128 }
    material NAME { type lambert; albedo 0.8 }
    mesh { material NAME; quad x y z  x y z  x y z  x y z }
    emitter { type distant; direction 0 0 1; solid_angle 1e-4; irradiance 1;
              spectrum blackbody 5800 }

Material types and keys:

* ``lambert``: ``albedo v``
* ``conductor``: ``ior eta [kappa] | ior cauchy A B | ior file PATH``
* ``dielectric``: ``ior ...``
* ``harvey-shack``: ``sigma m``, ``corr_length m``, ``exponent c``, ``ior ...``
* ``grating``: ``profile sinusoidal|rectangular|triangular``, ``period L [L2]``,
  ``height m``, ``orientation deg``, ``ior ...``
* ``multilayer``: ``layer thickness ior...`` (repeatable), ``substrate ior...``

Mesh geometry: ``quad`` (4 points), ``sphere cx cy cz r [subdivisions]``,
``obj PATH``, or ``vertices ...`` with ``triangles i j k ...``. An optional
``tangent x y z`` fixes the in-plane reference axis of gratings.

Emitters: ``distant`` (``direction``, ``solid_angle`` sr, ``irradiance``),
``area`` (``quad``, ``radiance``, ``ms_chain MATERIAL``) and ``envmap``
(``radiance``, optional ``file PATH.pfm``). All take ``spectrum
constant v | blackbody T | file PATH``. Lengths are metres, angles degrees,
temperatures kelvin.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bsdf import (Conductor, Dielectric, Grating, HarveyShack, Lambertian, Multilayer,
                    MultilayerStack)
from ..io import read_pfm
from ..spectral import RefractiveIndex, Spectrum
from .camera import PinholeCamera
from .emitters import AreaEmitter, DistantEmitter, EnvmapEmitter
from .geometry import icosphere, load_obj, mesh_triangles, quad
from .scene import Scene, build_scene


class SceneError(ValueError):
    pass


@dataclass
class Statement:
    key: str
    args: list
    line: int


@dataclass
class Block:
    kind: str
    name: str | None
    body: list
    line: int


def _tokenize(text: str):
    """Yield (token, line) with '{', '}', ';' and newlines as separators."""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        for tok in re.findall(r"\{|\}|;|[^\s{};]+", line):
            yield tok, lineno
        yield "\n", lineno


def parse_blocks(text: str, source: str = "<scene>"):
    blocks = []
    toks = list(_tokenize(text))
    i = 0
    while i < len(toks):
        tok, line = toks[i]
        if tok in ("\n", ";"):
            i += 1
            continue
        header = []
        while i < len(toks) and toks[i][0] not in ("{", "\n", ";"):
            header.append(toks[i][0])
            i += 1
        if i >= len(toks) or toks[i][0] != "{":
            raise SceneError(f"{source}:{line}: expected '{{' after {' '.join(header)!r}")
        if len(header) not in (1, 2):
            raise SceneError(f"{source}:{line}: malformed block header {' '.join(header)!r}")
        i += 1
        body, current = [], None
        while True:
            if i >= len(toks):
                raise SceneError(f"{source}:{line}: unterminated block {header[0]!r}")
            t, ln = toks[i]
            i += 1
            if t == "}":
                if current:
                    body.append(current)
                break
            if t == "{":
                raise SceneError(f"{source}:{ln}: nested blocks are not allowed")
            if t in ("\n", ";"):
                if current:
                    body.append(current)
                current = None
                continue
            if current is None:
                current = Statement(t, [], ln)
            else:
                current.args.append(t)
        blocks.append(Block(header[0], header[1] if len(header) == 2 else None, body, line))
    return blocks


class _Reader:
    def __init__(self, source, base: Path):
        self.source = source
        self.base = base

    def err(self, line, msg):
        return SceneError(f"{self.source}:{line}: {msg}")

    def floats(self, st: Statement, n=None):
        try:
            vals = [float(a) for a in st.args]
        except ValueError:
            raise self.err(st.line, f"{st.key}: expected numbers, got {' '.join(st.args)!r}")
        if n is not None and len(vals) != n:
            raise self.err(st.line, f"{st.key}: expected {n} values, got {len(vals)}")
        return vals

    def keys(self, block: Block, allowed):
        out = {}
        for st in block.body:
            if st.key not in allowed:
                raise self.err(st.line, f"unknown key {st.key!r} in {block.kind} block "
                                        f"(allowed: {', '.join(sorted(allowed))})")
            if st.key in out and st.key != "layer":
                raise self.err(st.line, f"duplicate key {st.key!r}")
            out.setdefault(st.key, []).append(st)
        return {k: (v if k == "layer" else v[0]) for k, v in out.items()}

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def ior(self, st: Statement):
        a = st.args
        if a and a[0] == "cauchy":
            v = self.floats(Statement(st.key, a[1:], st.line))
            if len(v) not in (1, 2):
                raise self.err(st.line, "ior cauchy takes A [B]")
            return RefractiveIndex.cauchy(*v)
        if a and a[0] == "file":
            return RefractiveIndex.from_file(self.path(a[1]))
        v = self.floats(st)
        if len(v) not in (1, 2):
            raise self.err(st.line, "ior takes eta [kappa]")
        return RefractiveIndex.constant(*v)

    def spectrum(self, st: Statement):
        a = st.args
        if len(a) == 2 and a[0] == "constant":
            return Spectrum.constant(float(a[1]))
        if len(a) == 2 and a[0] == "blackbody":
            return Spectrum.blackbody(float(a[1]))
        if len(a) == 2 and a[0] == "file":
            return Spectrum.from_file(self.path(a[1]))
        raise self.err(st.line, "spectrum must be 'constant v', 'blackbody T' or 'file PATH'")


_MATERIAL_KEYS = {
    "lambert": {"type", "albedo"},
    "conductor": {"type", "ior"},
    "dielectric": {"type", "ior"},
    "harvey-shack": {"type", "sigma", "corr_length", "exponent", "ior"},
    "grating": {"type", "profile", "period", "height", "orientation", "ior"},
    "multilayer": {"type", "layer", "substrate"},
}


def _material(r: _Reader, block: Block):
    if not block.name:
        raise r.err(block.line, "material block needs a name")
    types = [st for st in block.body if st.key == "type"]
    if not types:
        raise r.err(block.line, f"material {block.name!r} has no type")
    kind = types[0].args[0] if types[0].args else ""
    if kind not in _MATERIAL_KEYS:
        raise r.err(types[0].line, f"unknown material type {kind!r} "
                                   f"(valid: {', '.join(_MATERIAL_KEYS)})")
    k = r.keys(block, _MATERIAL_KEYS[kind])

    def num(key, default=None):
        if key in k:
            return r.floats(k[key], 1)[0]
        if default is None:
            raise r.err(block.line, f"material {block.name!r}: missing {key!r}")
        return default

    try:
        if kind == "lambert":
            return Lambertian(num("albedo", 0.5))
        ior = r.ior(k["ior"]) if "ior" in k else None
        if kind == "conductor":
            return Conductor(ior or RefractiveIndex.constant(0.27, 2.78))
        if kind == "dielectric":
            return Dielectric(ior or RefractiveIndex.constant(1.5))
        if kind == "harvey-shack":
            return HarveyShack(num("sigma"), num("corr_length"), num("exponent", 3.0), ior=ior)
        if kind == "grating":
            prof = k["profile"].args[0] if "profile" in k else "sinusoidal"
            if "period" not in k:
                raise r.err(block.line, f"material {block.name!r}: missing 'period'")
            return Grating(prof, r.floats(k["period"]), num("height"), num("orientation", 0.0),
                           ior=ior)
        layers = []
        for st in k.get("layer", []):
            if len(st.args) < 2:
                raise r.err(st.line, "layer takes thickness and ior")
            layers.append((float(st.args[0]), r.ior(Statement("ior", st.args[1:], st.line))))
        sub = r.ior(k["substrate"]) if "substrate" in k else RefractiveIndex.constant(1.5)
        return Multilayer(MultilayerStack(tuple(layers), sub))
    except SceneError:
        raise
    except ValueError as exc:
        raise r.err(block.line, f"material {block.name!r}: {exc}") from exc


def _geometry(r: _Reader, k, line):
    if "quad" in k:
        v = np.array(r.floats(k["quad"], 12)).reshape(4, 3)
        return quad(*v)
    if "sphere" in k:
        v = r.floats(k["sphere"])
        if len(v) not in (4, 5):
            raise r.err(k["sphere"].line, "sphere takes cx cy cz r [subdivisions]")
        return icosphere(v[:3], v[3], int(v[4]) if len(v) == 5 else 3)
    if "obj" in k:
        p = r.path(k["obj"].args[0])
        if not p.exists():
            raise r.err(k["obj"].line, f"OBJ file not found: {p}")
        return load_obj(p)
    if "vertices" in k:
        v = np.array(r.floats(k["vertices"]))
        if v.size % 3 or "triangles" not in k:
            raise r.err(line, "vertices need a multiple of 3 values and a triangles list")
        t = np.array(r.floats(k["triangles"]), int)
        if t.size % 3 or t.min() < 0 or t.max() >= v.size // 3:
            raise r.err(k["triangles"].line, "triangle indices out of range")
        return v.reshape(-1, 3), t.reshape(-1, 3)
    raise r.err(line, "mesh needs quad, sphere, obj or vertices/triangles")


def load_scene_text(text: str, source: str = "<scene>", base: Path | None = None) -> Scene:
    r = _Reader(source, base or Path("."))
    blocks = parse_blocks(text, source)
    materials, meshes, emitter_blocks = {}, [], []
    camera, min_feature = None, 1e-3
    for b in blocks:
        if b.kind == "material":
            if b.name in materials:
                raise r.err(b.line, f"duplicate material {b.name!r}")
            materials[b.name] = _material(r, b)
        elif b.kind == "scene":
            k = r.keys(b, {"min_feature"})
            if "min_feature" in k:
                min_feature = r.floats(k["min_feature"], 1)[0]
        elif b.kind == "camera":
            k = r.keys(b, {"position", "look_at", "up", "fov", "resolution"})
            for need in ("position", "look_at"):
                if need not in k:
                    raise r.err(b.line, f"camera needs {need!r}")
            res = r.floats(k["resolution"], 2) if "resolution" in k else (64, 64)
            try:
                camera = PinholeCamera(r.floats(k["position"], 3), r.floats(k["look_at"], 3),
                                       r.floats(k["up"], 3) if "up" in k else None,
                                       r.floats(k["fov"], 1)[0] if "fov" in k else 40.0,
                                       int(res[0]), int(res[1]))
            except ValueError as exc:
                raise r.err(b.line, str(exc)) from exc
        elif b.kind == "mesh":
            meshes.append(b)
        elif b.kind == "emitter":
            emitter_blocks.append(b)
        else:
            raise r.err(b.line, f"unknown block {b.kind!r} "
                                "(valid: scene, camera, material, mesh, emitter)")
    if camera is None:
        raise SceneError(f"{source}: no camera block")
    if min_feature < 1e-3:
        warnings.warn(f"{source}: min_feature {min_feature:g} m is below 1 mm; generalised rays "
                      "may exceed geometric detail", stacklevel=2)
    names = list(materials)
    parts = []
    for b in meshes:
        k = r.keys(b, {"material", "quad", "sphere", "obj", "vertices", "triangles", "tangent"})
        if "material" not in k:
            raise r.err(b.line, "mesh needs a material")
        mname = k["material"].args[0]
        if mname not in materials:
            raise r.err(k["material"].line, f"unknown material {mname!r}")
        verts, faces = _geometry(r, k, b.line)
        axis = r.floats(k["tangent"], 3) if "tangent" in k else None
        try:
            parts.append(mesh_triangles(verts, faces, names.index(mname), tangent_axis=axis))
        except ValueError as exc:
            raise r.err(b.line, str(exc)) from exc
    emitters = []
    for b in emitter_blocks:
        kinds = [st for st in b.body if st.key == "type"]
        kind = kinds[0].args[0] if kinds and kinds[0].args else None
        allowed = {"distant": {"type", "direction", "solid_angle", "irradiance", "spectrum"},
                   "area": {"type", "quad", "radiance", "spectrum", "ms_chain", "sourcing_area"},
                   "envmap": {"type", "radiance", "spectrum", "file"}}
        if kind not in allowed:
            raise r.err(b.line, f"emitter type must be one of {', '.join(allowed)}")
        k = r.keys(b, allowed[kind])
        spec = r.spectrum(k["spectrum"]) if "spectrum" in k else Spectrum.constant(1.0)
        try:
            if kind == "distant":
                if "direction" not in k or "solid_angle" not in k:
                    raise r.err(b.line, "distant emitter needs direction and solid_angle")
                emitters.append(DistantEmitter(
                    r.floats(k["direction"], 3), r.floats(k["solid_angle"], 1)[0],
                    r.floats(k["irradiance"], 1)[0] if "irradiance" in k else 1.0, spec))
            elif kind == "area":
                if "quad" not in k:
                    raise r.err(b.line, "area emitter needs a quad")
                v, f = quad(*np.array(r.floats(k["quad"], 12)).reshape(4, 3))
                chain = k["ms_chain"].args[0] if "ms_chain" in k else None
                if chain is not None and chain not in materials:
                    raise r.err(k["ms_chain"].line, f"unknown material {chain!r}")
                kw = {}
                if "sourcing_area" in k:
                    kw["sourcing_area"] = r.floats(k["sourcing_area"], 1)[0]
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    em = AreaEmitter(v[f[:, 0]], v[f[:, 1]], v[f[:, 2]],
                                     r.floats(k["radiance"], 1)[0] if "radiance" in k else 1.0,
                                     spec, ms_chain=chain, **kw)
                for w in caught:
                    warnings.warn(f"{source}:{b.line}: {w.message}", stacklevel=2)
                emitters.append(em)
            else:
                img = None
                if "file" in k:
                    p = r.path(k["file"].args[0])
                    if not p.exists():
                        raise r.err(k["file"].line, f"envmap file not found: {p}")
                    img = read_pfm(p)
                emitters.append(EnvmapEmitter(
                    r.floats(k["radiance"], 1)[0] if "radiance" in k else 1.0, spec, img))
        except SceneError:
            raise
        except ValueError as exc:
            raise r.err(b.line, str(exc)) from exc
    if not emitters:
        raise SceneError(f"{source}: scene has no emitters")
    if not parts:
        raise SceneError(f"{source}: scene has no meshes")
    return build_scene(parts, materials, emitters, camera, min_feature)


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scene file not found: {path}")
    return load_scene_text(path.read_text(), str(path), path.parent)


def bundled_scene_path(name: str) -> Path:
    from importlib import resources
    p = Path(str(resources.files("waveray").joinpath(f"data/{name}.ws")))
    if not p.exists():
        raise FileNotFoundError(f"no bundled scene named {name!r}")
    return p
