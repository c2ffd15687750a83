import numpy as np
import pytest

from waveray.coherence import (LAMBERTIAN_SPREAD, SOURCE_AREA_M2, BundleState, CoherenceError,
                               coherence_area, coherence_from_diffusivity,
                               diffusivity_from_coherence, envmap_cluster_solid_angle,
                               isotropic_diffusivity, propagate_distance, solid_angle_measure,
                               source_area, source_distant, transform_at_interaction)

LAM = 550e-9
SUN = 6.8e-5


def random_spd(rng, scale=1e-4):
    a = rng.normal(size=(2, 2)) * scale
    return a @ a.T + scale**2 * 0.1 * np.eye(2)


def test_isotropic_sun_coherence_area():
    theta = coherence_from_diffusivity(SUN * np.eye(2), LAM)
    assert coherence_area(theta) == pytest.approx(LAM**2 / SUN, rel=1e-12)
    assert coherence_area(theta) == pytest.approx(4.45e-9, rel=1e-3)
    assert np.sqrt(coherence_area(theta)) == pytest.approx(66.7e-6, rel=1e-2)


def test_identity_case():
    np.testing.assert_allclose(coherence_from_diffusivity(LAM**2 * np.eye(2), LAM), np.eye(2),
                               rtol=1e-12)


def test_anisotropic_inversion():
    theta = coherence_from_diffusivity(np.diag([1e-4, 4e-4]), LAM)
    np.testing.assert_allclose(theta, np.diag([LAM**2 / 1e-4, LAM**2 / 4e-4]), rtol=1e-12)


def test_singular_diffusivity_rejected():
    with pytest.raises(CoherenceError):
        coherence_from_diffusivity(np.diag([1e-4, 0.0]), LAM)


def test_round_trip():
    om = np.array([[2e-4, 5e-5], [5e-5, 1e-4]])
    np.testing.assert_allclose(diffusivity_from_coherence(coherence_from_diffusivity(om, LAM), LAM),
                               om, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_area_times_measure_identity(seed):
    om = random_spd(np.random.default_rng(seed))
    theta = coherence_from_diffusivity(om, LAM)
    assert coherence_area(theta) * np.sqrt(np.linalg.det(om)) == pytest.approx(LAM**2, rel=1e-12)


def test_sun_scale():
    b = source_distant(SUN, LAM)
    # isotropic split S/(2 pi): linear coherence scale of the order of 150 um
    assert 100e-6 < np.sqrt(b.coherence_area) < 200e-6
    assert solid_angle_measure(b.omega) == pytest.approx(SUN, rel=1e-12)


def test_doubling_solid_angle_halves_area():
    a = source_distant(SUN, LAM).coherence_area
    b = source_distant(2 * SUN, LAM).coherence_area
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_degenerate_sources_rejected():
    with pytest.raises(CoherenceError):
        source_distant(0.0, LAM)
    with pytest.raises(CoherenceError):
        isotropic_diffusivity(envmap_cluster_solid_angle(64, 32, 1.0, cluster=0))


def test_envmap_cluster_solid_angle():
    w, h = 256, 128
    th = np.pi / 3
    expected = 4 * (np.pi / h) * (2 * np.pi / w) * np.sin(th)
    assert envmap_cluster_solid_angle(w, h, th) == pytest.approx(expected, rel=1e-12)


def test_area_source_solid_angle():
    b = source_area(SOURCE_AREA_M2, 1.0, LAM)
    assert solid_angle_measure(b.omega) == pytest.approx(1e-5, rel=1e-12)


def test_area_source_distance_scaling():
    b = source_area(SOURCE_AREA_M2, 1.0, LAM)
    far = propagate_distance(b, 1.0)
    assert far.path_distance == 2.0
    assert far.coherence_area == pytest.approx(4 * b.coherence_area, rel=1e-12)
    assert source_area(SOURCE_AREA_M2, 2.0, LAM).coherence_area == pytest.approx(
        far.coherence_area, rel=1e-12)


def test_area_source_incoherent_limit():
    areas = [source_area(a, 1.0, LAM).coherence_area for a in (1e-6, 1e-3, 1.0, 1e3)]
    assert np.all(np.diff(areas) < 0)
    assert areas[-1] == pytest.approx(1e-9 * areas[0], rel=1e-9)


def test_propagate_zero_is_identity():
    b = source_area(SOURCE_AREA_M2, 0.5, LAM)
    assert propagate_distance(b, 0.0) is b


def test_distant_propagation_leaves_theta():
    b = source_distant(SUN, LAM)
    np.testing.assert_array_equal(propagate_distance(b, 123.0).theta, b.theta)


def test_negative_distance_rejected():
    with pytest.raises(CoherenceError):
        propagate_distance(source_distant(SUN, LAM), -1.0)


def test_mirror_keeps_area():
    b = BundleState(np.array([[3e-4, 1e-4], [1e-4, 1e-4]]), LAM)
    out = transform_at_interaction(b, "specular-reflect", frame_angle=0.7)
    assert out.coherence_area == pytest.approx(b.coherence_area, rel=1e-12)


def test_diffraction_with_equal_spread():
    b = source_distant(SUN, LAM)
    out = transform_at_interaction(b, "diffractive", sigma=b.omega)
    # doubled Omega: det(Theta) drops fourfold, so sqrt(det Theta) halves
    assert np.linalg.det(out.theta) == pytest.approx(np.linalg.det(b.theta) / 4, rel=1e-12)
    assert out.coherence_area == pytest.approx(b.coherence_area / 2, rel=1e-12)


def test_lambertian_collapses_coherence():
    b = source_distant(SUN, LAM)
    out = transform_at_interaction(b, "diffractive", sigma=LAMBERTIAN_SPREAD)
    assert out.coherence_area < 1e-3 * b.coherence_area
    assert out.coherence_area == pytest.approx(LAM**2 / LAMBERTIAN_SPREAD, rel=1e-3)


def test_refraction_jacobian():
    b = BundleState(1e-4 * np.eye(2), LAM)
    ci, eta = np.cos(0.5), 1 / 1.5
    ct = np.sqrt(1 - eta**2 * (1 - ci**2))
    out = transform_at_interaction(b, "specular-refract", cos_i=ci, cos_t=ct, eta_ratio=eta)
    np.testing.assert_allclose(np.diag(out.omega), 1e-4 * np.array([eta * ci / ct, eta]) ** 2,
                               rtol=1e-12)


def test_unknown_kind_rejected():
    with pytest.raises(CoherenceError):
        transform_at_interaction(source_distant(SUN, LAM), "scatter")


def test_random_sequences_stay_spd():
    rng = np.random.default_rng(8)
    for _ in range(50):
        b = source_area(SOURCE_AREA_M2, rng.uniform(0.1, 3), LAM)
        prev = b.coherence_area
        for _ in range(6):
            kind = rng.choice(["specular-reflect", "specular-refract", "diffractive", "propagate"])
            if kind == "propagate":
                b = propagate_distance(b, rng.uniform(0, 2))
                assert b.coherence_area >= prev * (1 - 1e-12)
            elif kind == "diffractive":
                b = transform_at_interaction(b, kind, frame_angle=rng.uniform(0, np.pi),
                                             sigma=random_spd(rng, 1e-3))
                assert b.coherence_area <= prev * (1 + 1e-12)
            elif kind == "specular-refract":
                ci = rng.uniform(0.3, 1)
                eta = rng.choice([1 / 1.5, 1.2])
                ct = np.sqrt(max(1 - eta**2 * (1 - ci**2), 1e-6))
                b = transform_at_interaction(b, kind, cos_i=ci, cos_t=ct, eta_ratio=eta)
            else:
                b = transform_at_interaction(b, kind, frame_angle=rng.uniform(0, np.pi))
            assert np.all(np.linalg.eigvalsh(b.omega) > 0)
            assert np.all(np.linalg.eigvalsh(b.theta) > 0)
            prev = b.coherence_area


def test_theta_is_per_bundle():
    b = source_distant(SUN, LAM)
    assert b.theta.shape == (2, 2)
    np.testing.assert_allclose(b.theta_at(2 * LAM), 4 * b.theta, rtol=1e-12)
