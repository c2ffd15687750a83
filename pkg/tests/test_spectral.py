import numpy as np
import pytest
from scipy import stats

from waveray.spectral import (LAMBDA_MAX, LAMBDA_MIN, RefractiveIndex, SpectralError, Spectrum,
                              cauchy_ior, emission_sampler, extremal_stokes, fresnel_amplitudes,
                              fresnel_mueller, is_physical_stokes, planck, rotation_mueller,
                              sample_emission_wavelengths, sample_hero_wavelength,
                              spectral_accumulate_to_rgb, spectrum_to_rgb)


def test_cauchy_glass_at_550():
    assert cauchy_ior(550.0, 1.183471, 0.005) == pytest.approx(1.200, abs=1e-3)


def test_cauchy_without_dispersion():
    lam = np.linspace(380, 700, 11)
    np.testing.assert_allclose(cauchy_ior(lam, 1.5, 0.0), 1.5)


def test_cauchy_at_400():
    assert cauchy_ior(400.0, 1.183471, 0.005) == pytest.approx(1.183471 + 0.005 / 0.16, abs=1e-12)
    assert cauchy_ior(400.0, 1.183471, 0.005) == pytest.approx(1.21472, abs=1e-5)


def test_cauchy_decreasing():
    lam = np.linspace(380, 700, 200)
    assert np.all(np.diff(cauchy_ior(lam, 1.4, 0.02)) < 0)


def test_refractive_index_validation():
    with pytest.raises(SpectralError):
        RefractiveIndex.cauchy(1.5, -0.01)
    assert RefractiveIndex.cauchy(1.5, 0.004).dispersive
    assert not RefractiveIndex.constant(1.5).dispersive
    assert RefractiveIndex.constant(0.27, 2.78).is_conductor


def test_fresnel_normal_incidence_glass():
    r, t, cos_t, tir = fresnel_mueller(1.0, 1.0, 1.5)
    assert r[0, 0] == pytest.approx(0.04, abs=1e-12)
    assert t[0, 0] == pytest.approx(0.96, abs=1e-12)
    assert not tir


def test_fresnel_brewster():
    th = np.arctan(1.5)
    _, r_p, *_ = fresnel_amplitudes(np.cos(th), 1.0, 1.5)
    assert abs(r_p) < 1e-12


def test_fresnel_gold_normal_incidence():
    eta = 0.27 + 2.78j
    expected = abs((1 - eta) / (1 + eta)) ** 2
    r, t, _, _ = fresnel_mueller(1.0, 1.0, eta)
    assert r[0, 0] == pytest.approx(expected, abs=1e-12)
    assert r[0, 0] == pytest.approx(0.8844, abs=1e-4)


def test_fresnel_energy_closure():
    cos_i = np.linspace(0.01, 1.0, 50)
    for eta_i, eta_t in [(1.0, 1.5), (1.5, 1.0), (1.0, 2.4)]:
        r, t, _, tir = fresnel_mueller(cos_i, eta_i, eta_t)
        ok = ~tir
        np.testing.assert_allclose(r[ok, 0, 0] + t[ok, 0, 0], 1.0, atol=1e-12)


def test_total_internal_reflection():
    r, t, _, tir = fresnel_mueller(np.cos(np.radians(60)), 1.5, 1.0)
    assert tir
    assert np.all(t == 0)
    assert r[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_mueller_preserves_physical_stokes():
    rng = np.random.default_rng(4)
    s = rng.normal(size=(500, 4))
    s[:, 0] = np.linalg.norm(s[:, 1:], axis=1) * rng.uniform(1.0, 2.0, 500)
    s = np.concatenate([s, extremal_stokes()])
    for cos_i in (1.0, 0.7, 0.2):
        for eta in (1.5, 0.27 + 2.78j):
            r, t, _, _ = fresnel_mueller(cos_i, 1.0, eta)
            for m in (r, t, rotation_mueller(0.3) @ r):
                assert np.all(is_physical_stokes(s @ m.T))


def test_hero_wavelength_endpoints():
    lam, pdf = sample_hero_wavelength(np.array([0.0, 0.5]))
    np.testing.assert_allclose(lam, [380.0, 540.0])
    np.testing.assert_allclose(pdf, 1 / 320)


def test_hero_wavelength_histogram():
    rng = np.random.default_rng(11)
    lam, _ = sample_hero_wavelength(rng.random(1_000_000))
    counts, _ = np.histogram(lam, bins=32, range=(LAMBDA_MIN, LAMBDA_MAX))
    assert stats.chisquare(counts).pvalue > 0.01


def test_constant_emission_is_uniform():
    lam, pdf = sample_emission_wavelengths(Spectrum.constant(3.0), np.array([0.1, 0.5, 0.9]))
    np.testing.assert_allclose(pdf, 1 / 320, rtol=1e-12)
    np.testing.assert_allclose(lam, [412.0, 540.0, 668.0], atol=1e-9)


def test_blackbody_emission_histogram():
    spec = Spectrum.blackbody(4100)
    rng = np.random.default_rng(2)
    lam, _ = sample_emission_wavelengths(spec, rng.random(1_000_000))
    edges = np.linspace(LAMBDA_MIN, LAMBDA_MAX, 33)
    counts, _ = np.histogram(lam, bins=edges)
    fine = np.linspace(LAMBDA_MIN, LAMBDA_MAX, 32 * 400 + 1)
    dens = planck(fine, 4100)
    cum = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))])
    expected = np.diff(np.interp(edges, fine, cum))
    expected *= counts.sum() / expected.sum()
    assert stats.chisquare(counts, expected).pvalue > 0.01


def test_spike_spectrum():
    spec = Spectrum.tabulated([549.5, 549.999, 550.0, 550.001, 550.5], [0, 0, 1, 0, 0])
    lam, pdf = sample_emission_wavelengths(spec, np.array([0.1, 0.5, 0.97]))
    assert np.all(np.abs(lam - 550.0) <= 0.5)
    assert np.all(pdf == pdf[0])


def test_emission_pdf_normalised():
    s = emission_sampler(Spectrum.blackbody(2700))
    assert np.sum(s.pdf_bins * np.diff(s.edges)) == pytest.approx(1.0, abs=1e-9)


def test_zero_spectrum_rejected():
    with pytest.raises(SpectralError):
        emission_sampler(Spectrum.constant(0.0))


def test_accumulate_empty():
    np.testing.assert_array_equal(spectral_accumulate_to_rgb([]), np.zeros(3))


def test_equal_energy_is_near_white():
    lam = np.linspace(LAMBDA_MIN, LAMBDA_MAX, 3201)
    w = np.full_like(lam, LAMBDA_MAX - LAMBDA_MIN) / len(lam)
    from waveray.spectral import XYZ_TO_SRGB
    rgb = spectral_accumulate_to_rgb(zip(lam, w), clamp=False)
    xyz = np.linalg.solve(XYZ_TO_SRGB, rgb)
    assert xyz[1] == pytest.approx(1.0, rel=2e-3)
    np.testing.assert_allclose(xyz, xyz[1], rtol=0.02)


def test_single_green_sample():
    rgb = spectral_accumulate_to_rgb([(550.0, 1.0)])
    assert np.argmax(rgb) == 1


def test_constant_spectrum_has_unit_luminance():
    rgb = spectrum_to_rgb(Spectrum.constant(1.0))
    assert rgb @ np.array([0.2126, 0.7152, 0.0722]) == pytest.approx(1.0, rel=1e-3)
