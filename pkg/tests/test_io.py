import struct

import numpy as np
import pytest
from PIL import Image

from waveray.io import read_csv, read_field, read_pfm, srgb_encode, write_csv, write_pfm, write_png


def independent_pfm(path):
    """Minimal PFM reader written against the format description."""
    data = path.read_bytes()
    parts = data.split(b"\n", 3)
    assert parts[0] == b"PF"
    w, h = map(int, parts[1].split())
    scale = float(parts[2])
    fmt = "<" if scale < 0 else ">"
    vals = struct.unpack(f"{fmt}{w * h * 3}f", parts[3][: w * h * 12])
    return np.array(vals, np.float32).reshape(h, w, 3)[::-1]


def test_pfm_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.normal(size=(7, 5, 3)).astype(np.float32) * np.float32(1e3)
    img[0, 0] = [np.inf, -0.0, 1e-38]
    p = tmp_path / "a.pfm"
    write_pfm(p, img)
    assert p.read_bytes().startswith(b"PF\n5 7\n-1.0\n")
    assert read_pfm(p).tobytes() == img.tobytes()
    assert independent_pfm(p).tobytes() == img.tobytes()


def test_pfm_greyscale_is_expanded(tmp_path):
    p = tmp_path / "g.pfm"
    write_pfm(p, np.arange(6, dtype=np.float32).reshape(2, 3))
    out = read_pfm(p)
    assert out.shape == (2, 3, 3)
    np.testing.assert_array_equal(out[..., 1], np.arange(6).reshape(2, 3))


def test_pfm_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 4)))
    bad = tmp_path / "bad.pfm"
    bad.write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(ValueError):
        read_pfm(bad)


def test_png_preview(tmp_path):
    img = np.zeros((2, 2, 3))
    img[0, 0] = 1.0
    img[1, 1] = 0.25
    p = tmp_path / "a.png"
    write_png(p, img, exposure=1.0)
    px = np.asarray(Image.open(p))
    assert px.dtype == np.uint8 and px.shape == (2, 2, 3)
    assert np.all(px[0, 0] == 255)
    assert np.all(px[1, 1] == int(srgb_encode(0.5) * 255 + 0.5))


def test_csv_round_trip(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ("a", "b"), [(1, 2.5), (3, 4.0)])
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows == [["1", "2.5"], ["3", "4.0"]]


def test_read_field_formats(tmp_path):
    p = tmp_path / "f.txt"
    np.savetxt(p, np.column_stack([np.arange(4), np.ones(4), np.zeros(4)]))
    r, v = read_field(p)
    np.testing.assert_array_equal(r, np.arange(4))
    np.testing.assert_array_equal(v, np.ones(4, complex))
    c = np.arange(8.0).reshape(2, 4)
    np.savetxt(p, c)
    r, v = read_field(p)
    assert r is None and v.shape == (2, 2)
    assert v[1, 1] == 6 + 7j
    np.savetxt(p, np.ones((3, 5)))
    with pytest.raises(ValueError):
        read_field(p)
