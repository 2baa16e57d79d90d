import numpy as np
import pytest

from xlirs.geometry import (GeometryConfig, build_geometry, distance,
                            rayleigh_distance)


def small_config(**kw):
    base = dict(wavelength=0.03, m_bs=4, nx=3, ny=2, n_users=2,
                bs_center=(5.0, 0.0, 2.0), irs_center=(0.0, 0.0, 2.0),
                anchor_position=(1.0, 1.0, 2.0),
                user_disc_center=(0.0, 4.0, 0.0), user_disc_radius=1.5)
    base.update(kw)
    return GeometryConfig(**base)


def test_ula_centered_half_wavelength():
    geo = build_geometry(small_config(), np.random.default_rng(0))
    bs = geo.bs_positions
    assert bs.shape == (4, 3)
    np.testing.assert_allclose(bs.mean(axis=0), [5.0, 0.0, 2.0], atol=1e-12)
    gaps = np.diff(bs[:, 0])
    np.testing.assert_allclose(gaps, 0.015)   # lambda/2
    assert np.all(bs[:, 1] == 0.0) and np.all(bs[:, 2] == 2.0)


def test_grid_row_major_indexing():
    # n = iy*nx + ix, x sweeps fastest, grid lives in the x-z plane
    geo = build_geometry(small_config(), np.random.default_rng(0))
    s = geo.element_spacing
    assert s == 0.015
    irs = geo.irs_positions
    for iy in range(2):
        for ix in range(3):
            n = iy * 3 + ix
            np.testing.assert_allclose(
                irs[n], [(ix - 1.0) * s, 0.0, 2.0 + (iy - 0.5) * s],
                atol=1e-12)


def test_explicit_spacing_overrides_half_wavelength():
    geo = build_geometry(small_config(element_spacing=0.03),
                         np.random.default_rng(0))
    assert geo.element_spacing == 0.03
    np.testing.assert_allclose(np.diff(geo.irs_positions[:3, 0]), 0.03)


def test_users_uniform_in_disc():
    cfg = small_config(n_users=200, user_height=0.7)
    for seed in range(5):
        geo = build_geometry(cfg, np.random.default_rng(seed))
        u = geo.user_positions
        r = np.linalg.norm(u[:, :2] - np.array([0.0, 4.0]), axis=1)
        assert np.all(r <= 1.5 + 1e-12)
        assert np.all(u[:, 2] == 0.7)
        # area-uniform draw puts about half the users beyond R/sqrt(2)
        assert 0.35 < np.mean(r > 1.5 / np.sqrt(2)) < 0.65


def test_geometry_deterministic_given_seed():
    a = build_geometry(small_config(), np.random.default_rng(123))
    b = build_geometry(small_config(), np.random.default_rng(123))
    np.testing.assert_array_equal(a.user_positions, b.user_positions)
    np.testing.assert_array_equal(a.irs_positions, b.irs_positions)


def test_bad_dimensions_rejected():
    with pytest.raises(ValueError):
        build_geometry(small_config(m_bs=0), np.random.default_rng(0))
    with pytest.raises(ValueError):
        build_geometry(small_config(n_users=0), np.random.default_rng(0))
    with pytest.raises(ValueError):
        build_geometry(small_config(wavelength=-1.0), np.random.default_rng(0))


def test_terminal_on_irs_element_rejected():
    # user disc centered on the IRS with zero radius -> zero distance
    cfg = small_config(user_disc_center=(0.0, 0.0, 2.0),
                       user_disc_radius=0.0, user_height=2.0, ny=1, nx=3)
    with pytest.raises(ValueError):
        build_geometry(cfg, np.random.default_rng(0))


def test_distance():
    assert distance((0, 0, 0), (3.0, 4.0, 0)) == 5.0


def test_rayleigh_distance_formula():
    # 2 (D_R + D)^2 / lambda
    assert rayleigh_distance(1.2, 0.3, 0.03) == pytest.approx(
        2 * (1.5) ** 2 / 0.03)
    with pytest.raises(ValueError):
        rayleigh_distance(-1.0, 0.3, 0.03)
    with pytest.raises(ValueError):
        rayleigh_distance(1.0, 0.3, 0.0)


def test_bs_link_gain_validation():
    with pytest.raises(ValueError):
        build_geometry(small_config(bs_link_gain=0.0),
                       np.random.default_rng(0))
