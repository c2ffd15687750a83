import csv
import io

import numpy as np
import pytest

from waveray import phasespace as ps
from waveray.cli import WDF_OPS, main
from waveray.io import read_csv, read_pfm, write_pfm
from waveray.report import CSV_HEADER, CompareReport, family, mse, run_compare
from waveray.scene import bundled_scene_path, load_scene


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], float)


# --- render ----------------------------------------------------------------------

def test_render_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.pfm", tmp_path / "b.pfm"]
    for p in paths:
        code, out, _ = run(capsys, "render", "lambert-plane", "--spp", "4", "--seed", "7",
                           "--resolution", "8x8", "--out", str(p))
        assert code == 0
        assert out.startswith("seed 7 spp 4 mode sample-solve time ")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert (tmp_path / "a.png").exists()
    assert read_pfm(paths[0]).shape == (8, 8, 3)


def test_render_modes_match_on_lambertian(tmp_path, capsys):
    imgs = []
    for mode in ("sample-solve", "fully-coherent"):
        p = tmp_path / f"{mode}.pfm"
        assert run(capsys, "render", "lambert-plane", "--spp", "4", "--resolution", "8x8",
                   "--mode", mode, "--out", str(p))[0] == 0
        imgs.append(p.read_bytes())
    assert imgs[0] == imgs[1]


def test_render_scene_by_path(tmp_path, capsys):
    p = tmp_path / "x.pfm"
    scene = str(bundled_scene_path("lambert-plane"))
    assert run(capsys, "render", scene, "--spp", "1", "--out", str(p))[0] == 0


def test_missing_scene_exits_2(tmp_path, capsys):
    missing = tmp_path / "nowhere.ws"
    code, _, err = run(capsys, "render", str(missing), "--out", str(tmp_path / "x.pfm"))
    assert code == 2
    assert f"scene file not found: {missing}" in err


def test_bad_scene_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ws"
    bad.write_text("camera { position 0 0 1; look_at 0 0 0; up 0 1 0 }\nmaterial m { type velvet }\n")
    code, _, err = run(capsys, "render", str(bad))
    assert code == 2 and "bad.ws:2" in err


def test_bad_flags_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["render", "lambert-plane", "--resolution", "8by8"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["render", "lambert-plane", "--mode", "ray-optics"])
    assert exc.value.code == 2
    code, _, err = run(capsys, "render", "lambert-plane", "--spp", "0")
    assert code == 2 and "spp" in err


# --- wdf-lab ---------------------------------------------------------------------

def test_wdf_lab_gaussian_matches_closed_form(capsys):
    code, out, _ = run(capsys, "wdf-lab", "gaussian", "--sigma", "1e-4", "--op", "wdf")
    assert code == 0
    header, t = table(out)
    assert header == ["r", "k", "w"]
    s = 1e-4
    ref = np.exp(-t[:, 0] ** 2 / (2 * s**2) - 2 * s**2 * t[:, 1] ** 2) / np.pi
    assert np.abs(t[:, 2] - ref).max() / ref.max() < 1e-6


def test_wdf_lab_uncertainty(capsys):
    code, out, _ = run(capsys, "wdf-lab", "gaussian", "--sigma", "1e-4", "--op", "uncertainty")
    header, t = table(out)
    assert header == ["sigma_r", "sigma_k", "product"]
    assert t[0, 2] == pytest.approx(0.5, abs=1e-4)


def test_wdf_lab_smooth_two_point_non_negative(capsys):
    _, out, _ = run(capsys, "wdf-lab", "two-point", "--op", "wdf")
    assert table(out)[1][:, 2].min() < 0
    _, out, _ = run(capsys, "wdf-lab", "two-point", "--op", "smooth")
    w = table(out)[1][:, 2]
    assert w.min() >= -1e-9 * w.max()


def test_wdf_lab_other_ops(tmp_path, capsys):
    for op, header in [("csd", ["r1", "r2", "re", "im"]), ("marginal", ["r", "intensity"]),
                       ("propagate", ["r", "k", "w"])]:
        out = tmp_path / f"{op}.csv"
        assert run(capsys, "wdf-lab", "gaussian", "--n", "32", "--op", op, "--out", str(out))[0] == 0
        assert read_csv(out)[0] == header
    code, out, err = run(capsys, "wdf-lab", "two-point", "--op", "decompose", "--n-rays", "8")
    assert code == 0 and "residual" in err
    assert table(out)[0] == ["mean_r", "mean_k", "sigma_r", "sigma_k", "weight"]


def test_wdf_lab_file_source(tmp_path, capsys):
    grid = ps.Grid1D.centred(64, 2.5e-5)
    f = ps.gaussian_field(grid, 1e-4)
    p = tmp_path / "field.txt"
    np.savetxt(p, np.column_stack([grid.r, f.values.real, f.values.imag]))
    code, out, _ = run(capsys, "wdf-lab", "file", "--input", str(p), "--op", "uncertainty")
    assert code == 0 and table(out)[1][0, 2] == pytest.approx(0.5, abs=1e-3)
    code, _, err = run(capsys, "wdf-lab", "file", "--op", "wdf")
    assert code == 2 and "--input" in err


def test_wdf_lab_unknown_op_lists_names(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["wdf-lab", "gaussian", "--op", "fourier"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    for op in WDF_OPS:
        assert op in err


# --- compare ---------------------------------------------------------------------

def test_compare_writes_csv_and_figures(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    code, stdout, _ = run(capsys, "compare", "lambert-plane", "--ladder", "1,2,4", "--ref-factor",
                          "4", "--resolution", "8x8", "--roi", "2,2,4,4", "--out", str(out))
    assert code == 0
    header, rows = read_csv(out)
    assert tuple(header) == CSV_HEADER
    assert len(rows) == 9
    assert [r[0] for r in rows[::3]] == ["sample-solve", "fully-coherent", "pc-baseline"]
    assert all(float(r[2]) >= 0 for r in rows)
    assert (tmp_path / "cmp_mse.png").exists()
    assert (tmp_path / "cmp_ref_sample-solve.png").exists()
    assert (tmp_path / "cmp_roi_pc-baseline.png").exists()
    assert "equal-MSE spp ratio fully-coherent/sample-solve" in stdout


def test_compare_with_reference_file(tmp_path, capsys):
    ref = tmp_path / "ref.pfm"
    write_pfm(ref, np.zeros((8, 8, 3)))
    out = tmp_path / "c.csv"
    assert run(capsys, "compare", "lambert-plane", "--ladder", "1,2", "--resolution", "8x8",
               "--modes", "sample-solve", "--reference", str(ref), "--out", str(out))[0] == 0
    _, rows = read_csv(out)
    assert len(rows) == 2 and float(rows[0][2]) > 0


def test_compare_rejects_bad_ladder(capsys):
    code, _, err = run(capsys, "compare", "lambert-plane", "--ladder", "4,2")
    assert code == 2 and "strictly increasing" in err


def test_lambertian_curves_coincide():
    sc = load_scene(bundled_scene_path("lambert-plane"))
    from waveray.integrator import RenderConfig
    rep = run_compare(sc, [4, 16, 64], roi=(4, 4, 8, 8), config=RenderConfig(resolution=(16, 16)),
                      ref_factor=16)
    ss = rep.series("sample-solve")[1]
    np.testing.assert_allclose(rep.series("fully-coherent")[1], ss, rtol=1e-9)
    # pc-baseline is scored against its own (equal, for Lambertian) reference
    np.testing.assert_allclose(rep.series("pc-baseline")[1], ss, rtol=1e-9)
    assert np.all(np.diff(ss) < 0)


def test_report_arithmetic():
    rep = CompareReport((0, 0, 1, 1))
    for s in (1, 4, 16):
        rep.rows.append(("sample-solve", s, 1.0 / s, 0.1))
        rep.rows.append(("fully-coherent", s, 3.0 / s, 0.1))
    assert rep.fit_constant("sample-solve") == pytest.approx(1.0)
    assert rep.equal_mse_ratio("fully-coherent", "sample-solve") == pytest.approx(3.0)
    assert rep.equal_mse_ratio("fully-coherent", "sample-solve", at_spp=4) == pytest.approx(3.0)
    assert rep.mse("fully-coherent", 16) == pytest.approx(3 / 16)
    assert family("fully-coherent") == "sample-solve" and family("pc-baseline") == "pc-baseline"
    assert mse(np.ones((2, 2)), np.zeros((2, 2))) == 1.0
    with pytest.raises(KeyError):
        rep.mse("sample-solve", 2)
