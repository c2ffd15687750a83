import numpy as np
import pytest
from scipy import stats

from waveray.bsdf import (LOBE_DIFFUSE, LOBE_GLOSSY, LOBE_ORDER, LOBE_REFLECT, BSDFError,
                          Conductor, Grating, HarveyShack, Lambertian, Multilayer,
                          MultilayerStack, eval_coherent, eval_partially_coherent,
                          grating_orders, pdf, sample, tmm_reflectance)
from waveray.bsdf.base import reflect_z, spherical_to_local
from waveray.coherence import CoherenceError
from waveray.spectral import (RefractiveIndex, extremal_stokes, fresnel_mueller,
                              is_physical_stokes)

GOLD = RefractiveIndex.constant(0.27, 2.78)
ANGLES = np.radians(np.linspace(0, 80, 8))


def direction(theta, phi=0.0):
    return spherical_to_local(np.asarray(theta, float), np.asarray(phi, float))


def random_upper(rng, n):
    w = rng.normal(size=(n, 3))
    w[:, 2] = np.abs(w[:, 2]) + 0.05
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def disk_grid(n, centre=(0.0, 0.0), half=1.0):
    """Midpoint grid over tangential coordinates; returns (dirs, cell area, inside mask)."""
    h = 2 * half / n
    x = centre[0] - half + h * (np.arange(n) + 0.5)
    y = centre[1] - half + h * (np.arange(n) + 0.5)
    tx, ty = np.meshgrid(x, y, indexing="ij")
    t2 = tx**2 + ty**2
    inside = t2 < 1
    z = np.sqrt(np.clip(1 - t2, 0, 1))
    dirs = np.stack([tx, ty, z], -1).reshape(-1, 3)
    return dirs, h * h, inside.ravel()


def psd_oracle(nu, corr, exponent):
    b = 2 * np.pi * corr
    return (exponent - 1) * b**2 / (2 * np.pi) * (1 + (b * nu) ** 2) ** (-(exponent + 1) / 2)


# --- Lambertian --------------------------------------------------------------

def test_lambert_is_depolarizer():
    rng = np.random.default_rng(0)
    for wi, wo in zip(random_upper(rng, 10), random_upper(rng, 10)):
        m = eval_coherent(Lambertian(0.7), wi, wo, 550)
        assert m[0, 0] == pytest.approx(0.7 / np.pi, rel=1e-12)
        m[0, 0] = 0.0
        assert np.all(m == 0)


def test_lambert_below_surface_is_zero():
    m = eval_coherent(Lambertian(0.7), [0, 0, -1], [0, 0, 1], 550)
    assert np.all(m == 0)


def test_lambert_pdf_is_cosine():
    wi = direction(0.6, 1.0)
    assert pdf(Lambertian(0.5), wi, [0, 0, 1], 550) == pytest.approx(np.cos(0.6) / np.pi, rel=1e-12)


def test_wavelength_mismatch_rejected():
    with pytest.raises(BSDFError):
        eval_coherent(Lambertian(0.5), [0, 0, 1], [0, 0, 1], 550, lam_o=600)


# --- Harvey-Shack ------------------------------------------------------------

def test_harvey_shack_smooth_limit():
    hs = HarveyShack(0.0, 1e-6, ior=GOLD)
    rng = np.random.default_rng(1)
    wi, wo = random_upper(rng, 50), random_upper(rng, 50)
    lam = np.full(50, 550.0)
    assert np.all(hs.eval(wi, wo, lam) == 0)
    r, _, _, _ = fresnel_mueller(wo[:, 2], 1.0, GOLD(550.0))
    np.testing.assert_allclose(hs.delta_energy(wo, lam), r[:, 0, 0], rtol=1e-12)


def test_harvey_shack_psd_oracle():
    sigma, corr, c = 20e-9, 1.5e-6, 3.0
    hs = HarveyShack(sigma, corr, c, ior=GOLD)
    rng = np.random.default_rng(2)
    wi, wo = random_upper(rng, 20), random_upper(rng, 20)
    lam = rng.uniform(400, 700, 20)
    lm = lam * 1e-9
    nu = np.linalg.norm(wi[:, :2] + wo[:, :2], axis=1) / lm
    h = (wi + wo) / np.linalg.norm(wi + wo, axis=1, keepdims=True)
    fres = np.array([fresnel_mueller(np.sum(a * b), 1.0, GOLD(l))[0][0, 0]
                     for a, b, l in zip(wi, h, lam)])
    tis = 1 - np.exp(-(2 * np.pi * sigma * (wi[:, 2] + wo[:, 2]) / lm) ** 2)
    expected = fres * tis * psd_oracle(nu, corr, c) / lm**2
    np.testing.assert_allclose(hs.eval(wi, wo, lam), expected, rtol=1e-10)


def test_harvey_shack_mueller_matches_scalar():
    hs = HarveyShack(30e-9, 1e-6, ior=GOLD)
    rng = np.random.default_rng(3)
    wi, wo = random_upper(rng, 30), random_upper(rng, 30)
    lam = np.full(30, 600.0)
    m = hs.eval_mueller(wi, wo, lam[:, None])[:, 0]
    np.testing.assert_allclose(m[:, 0, 0], hs.eval(wi, wo, lam), rtol=1e-10)


def test_harvey_shack_chi_square():
    hs = HarveyShack(60e-9, 0.5e-6, ior=GOLD)
    wo = direction(0.5, 0.3)
    lam = 550.0
    n = 1_000_000
    rng = np.random.default_rng(4)
    s = hs.sample(np.tile(wo, (n, 1)), np.full(n, lam), rng.random((n, 3)))
    g = s.lobe == LOBE_GLOSSY
    np.testing.assert_allclose(s.pdf[g], hs.pdf(s.wi[g], np.tile(wo, (g.sum(), 1)),
                                                np.full(g.sum(), lam)), rtol=1e-12)
    bins = 32
    counts, _, _ = np.histogram2d(s.wi[g, 0], s.wi[g, 1], bins=bins, range=[[-1, 1], [-1, 1]])
    sub = 16
    dirs, area, inside = disk_grid(bins * sub)
    dens = hs.pdf(dirs, np.tile(wo, (len(dirs), 1)), np.full(len(dirs), lam))
    dens = np.where(inside, dens / np.maximum(dirs[:, 2], 1e-12), 0.0) * area
    expected = n * dens.reshape(bins, sub, bins, sub).sum((1, 3))
    obs, exp = counts.ravel(), expected.ravel()
    big = exp >= 5
    obs = np.append(obs[big], n - obs[big].sum())
    exp = np.append(exp[big], n - exp[big].sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_harvey_shack_pdf_integral():
    hs = HarveyShack(80e-9, 2e-6, ior=GOLD)
    wo = direction(0.4)
    lam = 550.0
    dirs, area, inside = disk_grid(2000)
    dens = hs.pdf(dirs, np.tile(wo, (len(dirs), 1)), np.full(len(dirs), lam))
    total = np.sum(np.where(inside, dens / np.maximum(dirs[:, 2], 1e-12), 0.0)) * area
    p_diffuse = 1 - hs.p_specular(np.cos(0.4), lam)
    assert total == pytest.approx(p_diffuse, abs=1e-2)


@pytest.mark.parametrize("material", [Lambertian(0.8), HarveyShack(50e-9, 1e-6, ior=GOLD)],
                         ids=["lambert", "harvey-shack"])
def test_sampling_consistency(material):
    wo = direction(0.3, 0.2)
    lam = 500.0
    n = 200_000
    rng = np.random.default_rng(5)
    s = material.sample(np.tile(wo, (n, 1)), np.full(n, lam), rng.random((n, 3)))
    est = np.sum(np.where(s.lobe == LOBE_REFLECT, 0.0, s.weight)) / n
    dirs, area, inside = disk_grid(1500)
    f = material.eval(dirs, np.tile(wo, (len(dirs), 1)), np.full(len(dirs), lam))
    # f cos dw = f dt on the tangential plane
    quad = np.sum(np.where(inside, f, 0.0)) * area
    assert est == pytest.approx(quad, rel=1e-2)


@pytest.mark.parametrize("material", [Lambertian(0.6), HarveyShack(40e-9, 1e-6, ior=GOLD)],
                         ids=["lambert", "harvey-shack"])
def test_reciprocity(material):
    rng = np.random.default_rng(6)
    wi, wo = random_upper(rng, 200), random_upper(rng, 200)
    lam = rng.uniform(380, 700, 200)
    a = material.eval(wi, wo, lam)
    b = material.eval(wo, wi, lam)
    np.testing.assert_allclose(a, b, rtol=1e-6)
    ma = material.eval_mueller(wi, wo, lam[:, None])[:, 0, 0, 0]
    mb = material.eval_mueller(wo, wi, lam[:, None])[:, 0, 0, 0]
    np.testing.assert_allclose(ma, mb, rtol=1e-6)


def test_mueller_outputs_keep_stokes_physical():
    hs = HarveyShack(40e-9, 1e-6, ior=GOLD)
    rng = np.random.default_rng(7)
    wi, wo = random_upper(rng, 50), random_upper(rng, 50)
    m = hs.eval_mueller(wi, wo, np.full((50, 1), 550.0))[:, 0]
    s = extremal_stokes()
    for mk in m:
        out = s @ mk.T
        assert np.all(is_physical_stokes(out / max(mk[0, 0], 1e-300)))


# --- gratings ----------------------------------------------------------------

def test_grating_orders_cd_pitch():
    g = Grating("sinusoidal", 1.6e-6, 100e-9)
    orders = grating_orders(g, [0, 0, 1], 550.0)
    ms = sorted(m for m, _, _ in orders)
    assert ms == [-2, -1, 0, 1, 2]
    wi = {m: w for m, w, _ in orders}
    assert wi[1][0] == pytest.approx(0.34375, abs=1e-12)
    assert np.degrees(np.arcsin(wi[1][0])) == pytest.approx(20.11, abs=0.01)
    assert wi[-2][0] == pytest.approx(-0.6875, abs=1e-12)


def test_grating_zeroth_order_is_specular():
    g = Grating("rectangular", 1.2e-6, 80e-9)
    wo = direction(0.7, 0.4)
    wi = {m: w for m, w, _ in grating_orders(g, wo, 600.0)}
    np.testing.assert_allclose(wi[0], reflect_z(wo), atol=1e-15)


def test_subwavelength_grating_keeps_only_zeroth():
    g = Grating("sinusoidal", 250e-9, 50e-9)
    assert [m for m, _, _ in grating_orders(g, [0, 0, 1], 550.0)] == [0]


@pytest.mark.parametrize("profile", ["sinusoidal", "rectangular", "triangular"])
def test_grating_equation_and_energy(profile):
    g = Grating(profile, 2.0e-6, 150e-9, orientation_deg=30, ior=GOLD)
    rng = np.random.default_rng(8)
    ax = np.array([np.cos(np.radians(30)), np.sin(np.radians(30))])
    for wo in random_upper(rng, 10):
        lam = rng.uniform(380, 700)
        orders = grating_orders(g, wo, lam)
        for m, wi, _ in orders:
            t = wi[:2] + wo[:2] - m * lam * 1e-9 / 2.0e-6 * ax
            assert np.max(np.abs(t)) < 1e-12
        total = sum(e for _, _, e in orders)
        r = fresnel_mueller(wo[2], 1.0, GOLD(lam))[0][0, 0]
        assert total == pytest.approx(r, rel=1e-12)
        assert total <= 1.0


def test_order_count_non_increasing_in_wavelength():
    g = Grating("sinusoidal", 3e-6, 100e-9)
    wo = direction(0.35, 0.2)
    counts = [len(grating_orders(g, wo, lam)) for lam in np.linspace(380, 700, 161)]
    assert np.all(np.diff(counts) <= 0)
    assert counts[0] > counts[-1]


def test_two_equal_orders_split_evenly():
    lam = 550.0
    # first zero of J0 at normal incidence leaves only the +-1 pair
    h = 2.404825557695773 * lam * 1e-9 / (4 * np.pi)
    g = Grating("sinusoidal", 800e-9, h)
    effs = {m: e for m, _, e in grating_orders(g, [0, 0, 1], lam)}
    assert set(effs) == {-1, 0, 1}
    assert effs[0] < 1e-20
    assert effs[1] == pytest.approx(effs[-1], rel=1e-12)
    n = 100_000
    rng = np.random.default_rng(9)
    s = g.sample(np.tile([0.0, 0.0, 1.0], (n, 1)), np.full(n, lam), rng.random((n, 3)))
    assert np.all(s.lobe == LOBE_ORDER) and np.all(s.delta)
    frac = np.mean(s.order[:, 0] == 1)
    assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / n)


def test_grating_pdf_is_zero_without_floor():
    g = Grating("sinusoidal", 1.6e-6, 100e-9)
    assert pdf(g, [0, 0, 1], [0, 0, 1], 550.0) == 0.0


# --- delta materials and thin films -------------------------------------------

def test_mirror_sampling():
    mirror = Conductor(GOLD)
    wo = direction(0.5, 1.2)
    rng = np.random.default_rng(10)
    for u in rng.random((20, 3)):
        s = sample(mirror, wo, u, 550.0)
        assert s.lobe[0] == LOBE_REFLECT and s.delta[0]
        np.testing.assert_allclose(s.wi[0], reflect_z(wo), atol=1e-15)
    r, _, _, _ = fresnel_mueller(np.cos(0.5), 1.0, GOLD(550.0))
    assert s.weight[0] == pytest.approx(r[0, 0], rel=1e-12)
    m = mirror.delta_mueller(s.wi, wo[None], s.lobe, s.order, np.array([[550.0]]))
    np.testing.assert_allclose(m[0, 0], r, rtol=1e-12)
    assert pdf(mirror, reflect_z(wo), wo, 550.0) == 0.0


def test_tmm_empty_stack():
    rs, rp = tmm_reflectance(MultilayerStack(), 1.0, 550.0)
    assert abs(rs) ** 2 == pytest.approx(0.04, abs=1e-12)
    assert abs(rp) ** 2 == pytest.approx(0.04, abs=1e-12)


def test_tmm_empty_stack_matches_fresnel():
    cos_i = np.linspace(0.05, 1, 20)
    rs, rp = tmm_reflectance(MultilayerStack(), cos_i, 550.0)
    r, _, _, _ = fresnel_mueller(cos_i, 1.0, 1.5)
    np.testing.assert_allclose(0.5 * (abs(rs) ** 2 + abs(rp) ** 2), r[:, 0, 0], atol=1e-12)


def quarter_wave(n1=1.38, lam0=550.0):
    return MultilayerStack(((lam0 * 1e-9 / (4 * n1), RefractiveIndex.constant(n1)),))


def airy(lam, n0=1.0, n1=1.38, n2=1.5, lam0=550.0):
    r01 = (n0 - n1) / (n0 + n1)
    r12 = (n1 - n2) / (n1 + n2)
    e = np.exp(-2j * 2 * np.pi * n1 * (lam0 / (4 * n1)) / lam)
    return abs((r01 + r12 * e) / (1 + r01 * r12 * e)) ** 2


def test_tmm_quarter_wave():
    rs, _ = tmm_reflectance(quarter_wave(), 1.0, 550.0)
    expected = ((1.38**2 - 1.5) / (1.38**2 + 1.5)) ** 2
    assert abs(rs) ** 2 == pytest.approx(expected, abs=1e-6)
    assert abs(rs) ** 2 == pytest.approx(0.01411, abs=1e-5)


def test_tmm_absentee_layer():
    rs, _ = tmm_reflectance(quarter_wave(), 1.0, 275.0)
    assert abs(rs) ** 2 == pytest.approx(0.04, abs=1e-12)


def test_tmm_matches_airy_across_wavelengths():
    lam = np.linspace(250, 1200, 40)
    rs, rp = tmm_reflectance(quarter_wave(), 1.0, lam)
    np.testing.assert_allclose(abs(rs) ** 2, airy(lam), atol=1e-12)
    np.testing.assert_allclose(abs(rp) ** 2, airy(lam), atol=1e-12)
    assert abs(tmm_reflectance(quarter_wave(), 1.0, 1100.0)[0]) ** 2 == pytest.approx(
        0.027227, abs=1e-6)


def test_tmm_lossless_bounded_and_continuous():
    stack = MultilayerStack(((100e-9, RefractiveIndex.constant(2.3)),
                             (170e-9, RefractiveIndex.constant(1.38))) * 3)
    cos_i = np.linspace(0.02, 1, 60)
    lam = np.linspace(380, 700, 400)
    rs, rp = tmm_reflectance(stack, cos_i[:, None], lam[None, :])
    assert np.all(abs(rs) ** 2 <= 1 + 1e-12) and np.all(abs(rp) ** 2 <= 1 + 1e-12)
    assert np.max(np.abs(np.diff(abs(rs) ** 2, axis=1))) < 0.05


# --- partially coherent evaluation ---------------------------------------------

def test_pc_lambert_unchanged():
    lam = 550.0
    for area in (1e-12, 1e-9, 1e-6):
        theta = area * np.eye(2)
        m = eval_partially_coherent(Lambertian(0.4), direction(0.3), direction(0.5, 2.0), theta, lam)
        np.testing.assert_allclose(m, eval_coherent(Lambertian(0.4), direction(0.3),
                                                    direction(0.5, 2.0), lam), rtol=1e-12)


def test_pc_converges_to_coherent():
    hs = HarveyShack(40e-9, 1e-6, ior=GOLD)
    lam = 550.0
    wi, wo = direction(0.4, 0.5), direction(0.6, 2.5)
    ref = eval_coherent(hs, wi, wo, lam)
    errs = []
    for area in (1e-10, 1e-8, 1e-6, 1e-4):
        m = eval_partially_coherent(hs, wi, wo, area * np.eye(2), lam)
        errs.append(np.max(np.abs(m - ref)) / ref[0, 0])
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] < 1e-6


def test_pc_coherent_grating_limit():
    g = Grating("sinusoidal", 1.6e-6, 100e-9, ior=GOLD)
    lam = 550.0
    wo = direction(0.2)
    orders = grating_orders(g, wo, lam)
    m, wi, _ = orders[0]
    near = eval_partially_coherent(g, wi, wo, 1e-2 * np.eye(2), lam)[0, 0]
    off = eval_partially_coherent(g, direction(0.05, 1.0), wo, 1e-2 * np.eye(2), lam)[0, 0]
    assert near > 1e6 and off == 0.0


def test_pc_singular_theta_rejected():
    with pytest.raises(CoherenceError):
        eval_partially_coherent(Lambertian(0.5), [0, 0, 1], [0, 0, 1], np.diag([1e-9, 0.0]), 550.0)


def test_pc_grating_energy_per_order():
    g = Grating("triangular", 2.5e-6, 200e-9, ior=GOLD)
    lam = 600.0
    wo = direction(0.25, 0.4)
    omega = 1e-4 * np.eye(2)
    for m, wi_m, eff in grating_orders(g, wo, lam):
        if eff < 1e-3:
            continue
        dirs, area, inside = disk_grid(400, centre=wi_m[:2], half=0.08)
        val = g.pc_mueller(dirs, np.tile(wo, (len(dirs), 1)), omega,
                           np.full((len(dirs), 1), lam))[:, 0, 0, 0]
        # integral of pc * cos_i over incident solid angle, with dw = dt / cos_i
        energy = np.sum(np.where(inside, val, 0.0)) * area
        assert energy == pytest.approx(eff, rel=1e-3)


# --- energy --------------------------------------------------------------------

def furnace(material, theta, lam, n=100_000, seed=0):
    wo = np.tile(direction(theta, 0.3), (n, 1))
    rng = np.random.default_rng(seed)
    s = material.sample(wo, np.full(n, lam), rng.random((n, 3)))
    return np.sum(np.where(s.lobe == LOBE_ORDER, 0.0, s.weight)) / n + \
        float(material.delta_energy(wo[:1], np.array([lam]))[0]) * material.is_grating


FAMILIES = {
    "lambert": Lambertian(1.0),
    "harvey-shack": HarveyShack(80e-9, 1e-6, ior=GOLD),
    "grating": Grating("sinusoidal", 1.6e-6, 120e-9, ior=GOLD),
    "multilayer": Multilayer(quarter_wave()),
}


@pytest.mark.parametrize("name", FAMILIES)
@pytest.mark.parametrize("lam", [450.0, 550.0, 650.0])
def test_white_furnace(name, lam):
    mat = FAMILIES[name]
    for th in ANGLES:
        assert furnace(mat, th, lam) <= 1 + 1e-2


def test_lambert_furnace_is_unity():
    assert furnace(Lambertian(1.0), 0.4, 550.0) == pytest.approx(1.0, abs=1e-12)


def test_lambert_sampler_lobe():
    s = sample(Lambertian(0.5), [0, 0, 1], [0.3, 0.6, 0.1], 550.0)
    assert s.lobe[0] == LOBE_DIFFUSE and s.pdf[0] == pytest.approx(s.wi[0, 2] / np.pi)
