"""Kernel oracles.

For the massless Gaussian coupling every kernel has a closed form, since
``rho_hat(k)^2 = g^2 (2 pi)^3 sigma^6 exp(-sigma^2 k^2)`` reduces the radial
integrals to Gaussian moments:

    K       = g^2 sigma^3 pi^{3/2} / 3
    d(t)    = (4 pi / 3) g^2 sigma^6 int k^3 e^{-a k^2} sin(k t) dk
    gamma(t)= (4 pi / 3) g^2 sigma^6 int k^2 e^{-a k^2} cos(k t) dk,   a = sigma^2
"""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson

from fieldparticle.kernels import (KernelTable, build_kernel_table, coupling_constant, coupling_constant_matrix,
                                   dissipation_scalar, laplace_scalar, laplace_symbol, lattice_kernel_table,
                                   lattice_shell_weights, memory_scalar, radial_kernel_series, stability_scan)
from fieldparticle.spectral_core import CouplingSpec, ModeGrid

from conftest import KGF, WF


def K_closed(g, s):
    return g * g * s ** 3 * np.pi ** 1.5 / 3


def d_closed(spec, t):
    a = spec.sigma ** 2
    moment = np.sqrt(np.pi) * t / 4 * a ** -2.5 * (1.5 - t * t / (4 * a)) * np.exp(-t * t / (4 * a))
    return 4 * np.pi / 3 * spec.g ** 2 * spec.sigma ** 6 * moment


def gamma_closed(spec, t):
    a = spec.sigma ** 2
    moment = np.sqrt(np.pi) / 4 * a ** -1.5 * (1 - t * t / (2 * a)) * np.exp(-t * t / (4 * a))
    return 4 * np.pi / 3 * spec.g ** 2 * spec.sigma ** 6 * moment


@given(st.floats(0.05, 3.0), st.floats(0.3, 2.0))
def test_coupling_constant_closed_form(g, s):
    spec = CouplingSpec(g=g, sigma=s, omega0=10.0)
    assert coupling_constant(spec) == pytest.approx(K_closed(g, s), rel=1e-9)


def test_coupling_constant_matrix_is_isotropic():
    np.testing.assert_allclose(coupling_constant_matrix(WF), coupling_constant(WF) * np.eye(3))


@pytest.mark.parametrize("t", [0.0, 0.5, 1.7, 4.0, 9.0])
def test_scalar_kernels_match_closed_form(t):
    assert dissipation_scalar(WF, t) == pytest.approx(d_closed(WF, t), abs=1e-10)
    assert memory_scalar(WF, t) == pytest.approx(gamma_closed(WF, t), abs=1e-10)


def test_vectorized_series_matches_closed_form():
    t = np.linspace(-3, 25, 701)
    d, g = radial_kernel_series(WF, t)
    np.testing.assert_allclose(d, d_closed(WF, t), atol=1e-12)
    np.testing.assert_allclose(g, gamma_closed(WF, t), atol=1e-12)


def test_series_matches_adaptive_quadrature_for_kgf():
    t = np.array([0.0, 1.0, 3.5, 12.0])
    d, g = radial_kernel_series(KGF, t)
    np.testing.assert_allclose(d, [dissipation_scalar(KGF, x) for x in t], atol=1e-9)
    np.testing.assert_allclose(g, [memory_scalar(KGF, x) for x in t], atol=1e-9)


def test_gamma_derivative_is_minus_d():
    h = 1e-3
    t = np.linspace(0.5, 15, 300)
    d, _ = radial_kernel_series(KGF, t)
    _, gp = radial_kernel_series(KGF, t + h)
    _, gm = radial_kernel_series(KGF, t - h)
    np.testing.assert_allclose((gp - gm) / (2 * h), -d, atol=1e-6)


def test_zero_coupling_kernels_vanish():
    spec = CouplingSpec(g=0.0)
    d, g = radial_kernel_series(spec, np.linspace(0, 5, 11))
    assert not d.any() and not g.any()
    assert laplace_scalar(spec, 1.0) == 0


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_laplace_symbol_is_time_transform_of_d(lam):
    t = np.linspace(0, 60 / lam, 24001)
    ref = simpson(np.exp(-lam * t) * d_closed(WF, t), x=t)
    assert laplace_scalar(WF, lam) == pytest.approx(ref, rel=1e-8)


def test_laplace_symbol_at_zero():
    A0 = laplace_symbol(KGF, 0.0)
    np.testing.assert_allclose(A0, (KGF.omega0 ** 2 - coupling_constant(KGF)) * np.eye(3))


def test_plemelj_sign_and_size_for_wave_field():
    y = 1.2
    rho = WF.g * (2 * np.pi) ** 1.5 * WF.sigma ** 3 * np.exp(-0.5 * (WF.sigma * y) ** 2)
    ref = -0.5 * np.pi * (4 * np.pi / 3) / (2 * np.pi) ** 3 * y ** 3 * rho ** 2
    assert laplace_scalar(WF, 1j * y).imag == pytest.approx(ref, rel=1e-12)
    assert laplace_scalar(WF, -1j * y).imag == pytest.approx(-ref, rel=1e-12)


def test_below_threshold_klein_gordon_symbol_is_real():
    assert laplace_scalar(KGF, 0.5j).imag == 0.0


def test_stability_scan_default_and_over_coupled():
    good = stability_scan(WF, n_scan=200)
    assert good.stable and good.r1prime_ok and good.margin > 0
    bad = stability_scan(WF.scaled(3.0), n_scan=200)
    assert not bad.stable and not bad.r1prime_ok and bad.det_A0 < 0
    with pytest.raises(ValueError):
        stability_scan(WF, n_scan=10)


def test_uncoupled_resonance_is_marginal():
    rep = stability_scan(CouplingSpec(g=0.0), n_scan=200)
    assert not rep.stable


def test_build_kernel_table_and_resample(tmp_path):
    tab = build_kernel_table(WF, 0.01, 5.0)
    assert tab.d[0] == 0.0 and tab.gamma[0] == pytest.approx(tab.kappa, rel=1e-10)
    np.testing.assert_allclose(tab.D_samples[:, 0, 0], tab.d)
    coarse = tab.resampled(0.02, 4.0)
    np.testing.assert_allclose(coarse.d, tab.d[:401:2])
    spline = tab.resampled(0.015, 4.5)
    np.testing.assert_allclose(spline.d, d_closed(WF, spline.times), atol=1e-8)
    path = tmp_path / "k.ndjson"
    tab.to_ndjson(path)
    back = KernelTable.from_ndjson(path)
    np.testing.assert_array_equal(back.d, tab.d)
    assert back.kappa == tab.kappa and back.meta == tab.meta
    with pytest.raises(ValueError):
        tab.resampled(0.01, 6.0)


def test_lattice_kernels_are_box_sums():
    grid = ModeGrid(24.0, 24)
    om, W = lattice_shell_weights(WF, grid)
    tab = lattice_kernel_table(WF, grid, 0.05, 10.0)
    keep = om > 0
    assert tab.gamma[0] == pytest.approx(np.sum(W[keep] / om[keep] ** 2))


def test_lattice_kernel_constant_converges_like_inverse_volume():
    # the excluded k = 0 cell dominates the error for the massless field
    K = coupling_constant(WF)
    err = [abs(lattice_kernel_table(WF, ModeGrid(L, int(L)), 0.05, 1.0).kappa / K - 1) for L in (24.0, 48.0)]
    assert err[1] < 1e-3
    assert 6.0 < err[0] / err[1] < 10.0


@given(st.floats(0.1, 2.0))
def test_kernels_scale_with_g_squared(c):
    t = np.linspace(0, 8, 41)
    d1, g1 = radial_kernel_series(KGF, t)
    d2, g2 = radial_kernel_series(KGF.scaled(c), t)
    np.testing.assert_allclose(d2, c * c * d1, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(g2, c * c * g1, rtol=1e-12, atol=1e-15)
