"""Image and table output: PFM (float), PNG previews, CSV."""
from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np
from PIL import Image


def write_pfm(path, image) -> None:
    """Little-endian colour PFM; rows are stored bottom-to-top."""
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PFM writer expects (H, W) or (H, W, 3)")
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file")
        channels = 3 if header == b"PF" else 1
        dims = fh.readline().split()
        while not dims:
            dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(w * h * channels * 4), dtype=dtype)
    img = data.reshape(h, w, channels)[::-1]
    img = img[..., 0] if channels == 1 else img
    return img.astype(np.float32)


def srgb_encode(linear):
    x = np.clip(linear, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def write_png(path, image, exposure: float = 0.0) -> None:
    """Tone-mapped 8-bit preview: exposure in stops, then clamp and sRGB encode."""
    img = np.asarray(image, float) * 2.0**exposure
    Image.fromarray((srgb_encode(img) * 255 + 0.5).astype(np.uint8)).save(path)


def write_csv(path, header, rows) -> None:
    fh = sys.stdout if str(path) == "-" else open(path, "w", newline="")
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    finally:
        if fh is not sys.stdout:
            fh.close()


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_field(path):
    """Read a sampled 1-D field or CSD.

    Two columns ``r value`` give a real field; three columns ``r re im`` a
    complex field. A square block of ``re im`` pairs (2N columns) is a CSD.
    Returns (r or None, values)."""
    table = np.loadtxt(Path(path), comments="#", delimiter=None, ndmin=2)
    if table.shape[1] == 2:
        return table[:, 0], table[:, 1].astype(complex)
    if table.shape[1] == 3:
        return table[:, 0], table[:, 1] + 1j * table[:, 2]
    if table.shape[1] == 2 * table.shape[0]:
        return None, table[:, 0::2] + 1j * table[:, 1::2]
    raise ValueError(f"{path}: expected 2, 3 or 2N columns")
