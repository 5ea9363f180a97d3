import numpy as np
import pytest

from conftest import LAM, Z_D, make_scene
from tdimaging.errors import DegenerateMapError, InvalidArgument
from tdimaging.forward import synthesize_filtered_data
from tdimaging.greens import hk_integral
from tdimaging.imaging import (ImagingMap, SearchGrid, backpropagate, closed_form_map, norm_im_green_sq,
                               peak_metrics, td_closed_form, td_multi, td_points, td_single)
from tdimaging.scene import incident_field


def test_backpropagate_zero_and_linear(rng):
    sc = make_scene("permeable", n=3, nodes=300)
    data = synthesize_filtered_data(sc)
    Z = Z_D + rng.uniform(-0.5, 0.5, (5, 3))
    zero = data.with_values(np.zeros_like(data.values))
    U, cU = backpropagate(zero, Z)
    assert np.all(U == 0) and np.all(cU == 0)
    W1 = rng.standard_normal(data.values.shape) + 1j * rng.standard_normal(data.values.shape)
    W2 = rng.standard_normal(data.values.shape) + 1j * rng.standard_normal(data.values.shape)
    a, b = 0.7 - 0.2j, -1.3
    # data enters conjugated, so the map is conjugate linear in the stored values
    lhs = backpropagate(data.with_values(np.conj(a * np.conj(W1) + b * np.conj(W2))), Z)[0]
    rhs = a * backpropagate(data.with_values(W1), Z)[0] + b * backpropagate(data.with_values(W2), Z)[0]
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


@pytest.mark.parametrize("kind", ["permeable", "dielectric"])
def test_td_single_two_path(kind):
    """Pipeline TD against the same boundary integral evaluated by the HK quadrature."""
    sc = make_scene(kind, n=3, nodes=3000, radius=5.0)
    data = synthesize_filtered_data(sc)
    th, pol = sc.incidences.flat()
    k, eps0 = sc.kappa, sc.ctx.eps0
    rho3 = sc.inclusion.scale ** 3
    m = sc.materials
    for z in (Z_D, Z_D + np.array([0.2, 0.1, 0.0]) * LAM):
        for idx in (0, 3):
            got = td_single(data, idx, z, sc.trial)
            H, cH = incident_field(th[idx], pol[idx], k, z)
            HD, cHD = incident_field(th[idx], pol[idx], k, Z_D)
            if kind == "permeable":
                R = hk_integral(sc.ctx, "tangential", sc.boundary_radius, z, Z_D, n_nodes=sc.boundary_nodes)
                ref = rho3 * k ** 4 * m.C_mu / eps0 ** 2 * np.real(
                    (sc.trial.m_mu @ H) @ np.conj(R) @ (sc.inclusion.m_mu @ np.conj(HD)))
            else:
                R = hk_integral(sc.ctx, "curl", sc.boundary_radius, z, Z_D, n_nodes=sc.boundary_nodes)
                ref = rho3 * m.C_eps / eps0 ** 2 * np.real(
                    (sc.trial.m_eps @ cH) @ np.conj(R) @ (sc.inclusion.m_eps @ np.conj(cHD)))
            assert got == pytest.approx(ref, rel=0.02)


def test_td_multi_single_direction_is_sum_of_td_single():
    sc = make_scene("dielectric", n=1, nodes=500)
    data = synthesize_filtered_data(sc)
    grid = SearchGrid.slice_through(Z_D, 0.25 * LAM, LAM / 8)
    m = td_multi(data, grid, sc.trial)
    for p, v in zip(grid.points()[::7], m.flat[::7]):
        assert v == pytest.approx(td_single(data, (0, 0), p, sc.trial) + td_single(data, (0, 1), p, sc.trial),
                                  rel=1e-12)


def test_closed_form_at_center():
    for kind in ("permeable", "dielectric"):
        sc = make_scene(kind)
        k, eps0 = sc.kappa, sc.ctx.eps0
        C = sc.trial.Ctilde_mu if kind == "permeable" else sc.trial.Ctilde_eps
        ref = sc.inclusion.scale ** 3 * k ** 2 * C * (eps0 * k) ** 2 / (12 * np.pi ** 2)
        val = td_closed_form(kind, Z_D, sc)
        assert val == pytest.approx(ref, rel=1e-12)
        assert val > 0
    with pytest.raises(InvalidArgument):
        td_closed_form("magnetic", Z_D, sc)


def test_closed_form_envelope_decay():
    sc = make_scene("permeable")
    e = np.array([0.48, 0.6, 0.64])
    # envelope of ||Im G||^2 ~ 1/(kr)^2: max over a wavelength window, 10 vs 20 wavelengths out
    def env(R):
        s = np.linspace(R, R + LAM, 400)
        return np.max(np.abs(td_closed_form("permeable", Z_D + s[:, None] * e, sc)))
    assert env(20 * LAM) / env(10 * LAM) == pytest.approx(0.25, rel=0.15)


def test_search_grid():
    g = SearchGrid.slice_through(np.array([1.0, 2.0, 3.0]), 5.0, 0.25, "y")
    assert g.dims == (21, 1, 21)
    assert g.plane_axes == (0, 2)
    pts = g.points()
    assert np.allclose(pts[:, 1], 2.0)
    assert np.allclose(pts.mean(axis=0), [1.0, 2.0, 3.0])
    with pytest.raises(InvalidArgument):
        SearchGrid.slice_through(np.zeros(3), 1.0, 0.1, "w")
    with pytest.raises(InvalidArgument):
        SearchGrid(np.zeros(3), 0.0, (2, 2, 2))
    with pytest.raises(InvalidArgument):
        SearchGrid(np.zeros(3), 1.0, (2, 0, 2))


def _analytic_map(spacing=LAM / 16):
    sc = make_scene("permeable")
    grid = SearchGrid.slice_through(Z_D, 5 * LAM, spacing)
    vals = norm_im_green_sq(sc.ctx, grid.points(), Z_D).reshape(grid.dims)
    return ImagingMap(grid, vals), grid


def test_peak_metrics_on_analytic_map():
    m, grid = _analytic_map()
    pm = peak_metrics(m, Z_D)
    assert pm["localization_error"] <= grid.spacing
    for v in pm["fwhm"].values():
        assert 0.35 * LAM <= v <= 0.6 * LAM
    assert pm["sidelobe_ratio"] > 1
    shifted = peak_metrics(ImagingMap(grid, m.values + 3.0), Z_D)
    assert np.array_equal(shifted["argmax"], pm["argmax"])


def test_peak_metrics_degenerate():
    grid = SearchGrid.slice_through(np.zeros(3), 1.0, 0.25)
    with pytest.raises(DegenerateMapError):
        peak_metrics(ImagingMap(grid, np.zeros(grid.dims)), np.zeros(3))
    bad = np.ones(grid.dims)
    bad[0, 0, 0] = np.nan
    with pytest.raises(DegenerateMapError):
        peak_metrics(ImagingMap(grid, bad), np.zeros(3))


def test_closed_form_map_matches_points():
    sc = make_scene("dielectric")
    grid = SearchGrid.slice_through(Z_D, LAM, LAM / 4)
    m = closed_form_map(sc, grid, "dielectric")
    assert np.allclose(m.flat, td_closed_form("dielectric", grid.points(), sc))


def test_td_points_chunking_consistent():
    sc = make_scene("permeable", n=4, nodes=300)
    data = synthesize_filtered_data(sc)
    Z = Z_D + np.linspace(-1, 1, 150)[:, None] * np.array([0.3, 0.1, 0.2])
    full = td_points(data, Z, sc.trial)
    part = np.concatenate([td_points(data, Z[:70], sc.trial), td_points(data, Z[70:], sc.trial)])
    assert np.array_equal(full, part)
