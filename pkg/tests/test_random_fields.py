import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldparticle.kernels import coupling_constant
from fieldparticle.random_fields import (FieldSample, SpectralDensity, empirical_spectral_density, generic_density,
                                         gibbs_field_density, interface_cutoffs, member_rng, sample_field,
                                         sample_half_batch, sample_particle, smoothstep, spatial_autocorrelation,
                                         tabulated_density, two_temperature_density, two_temperature_half_batch,
                                         two_temperature_sample)
from fieldparticle.spectral_core import CouplingSpec, ModeGrid

from conftest import KGF, WF

GRID = ModeGrid(8.0, 8)


def draws(density, n, base=0, grid=GRID):
    return [sample_field(density, grid, (base, i)) for i in range(n)]


def test_member_streams_are_reproducible_and_distinct():
    a = member_rng(5, 3).standard_normal(4)
    np.testing.assert_array_equal(a, member_rng(5, 3).standard_normal(4))
    assert not np.allclose(a, member_rng(5, 4).standard_normal(4))
    assert not np.allclose(a, member_rng(5, 3, stream=1).standard_normal(4))


def test_sample_is_deterministic_and_hermitian():
    dens = generic_density(1.0, 2.0, 0.5, KGF)
    a = sample_field(dens, GRID, (7, 2))
    b = sample_field(dens, GRID, (7, 2))
    np.testing.assert_array_equal(a.phi_hat, b.phi_hat)
    assert GRID.is_hermitian(a.phi_hat) and GRID.is_hermitian(a.pi_hat)
    assert np.all(a.phi_hat[~GRID.active] == 0)
    assert sample_field(dens, GRID, 7).seed == 7


def test_massless_laws_exclude_the_zero_mode():
    s = sample_field(gibbs_field_density(1.0, WF), GRID, 0)
    assert s.phi_hat[0, 0, 0] == 0 and s.pi_hat[0, 0, 0] == 0


def test_empirical_density_matches_generic_law():
    dens = generic_density(1.5, 0.5, 0.4, KGF)
    emp = empirical_spectral_density(draws(dens, 400))
    a, b, _ = dens.evaluate(GRID)
    act = GRID.active
    # each |phi_hat|^2 / (L^3 q00) has mean one; pool over modes
    r00 = emp.q00[act] / a[act]
    r11 = emp.q11[act] / b[act]
    npool = act.sum() * 400 / 2
    assert abs(r00.mean() - 1) < 5 / np.sqrt(npool)
    assert abs(r11.mean() - 1) < 5 / np.sqrt(npool)
    assert not emp.degenerate


def test_gibbs_law_has_equipartition():
    T = 0.7
    dens = gibbs_field_density(T, KGF)
    emp = empirical_spectral_density(draws(dens, 300))
    act = GRID.active
    om2 = GRID.kmag ** 2 + KGF.m ** 2
    assert np.mean(om2[act] * emp.q00[act]) == pytest.approx(T, rel=0.03)
    assert np.mean(emp.q11[act]) == pytest.approx(T, rel=0.03)
    assert np.mean(np.abs(emp.q01[act])) < 0.1 * T


def test_cross_spectrum_is_reproduced():
    c = lambda k: 0.4j * np.sign(k[..., 0])
    dens = SpectralDensity("cross", lambda k: np.ones(k.shape[:-1]), lambda k: np.ones(k.shape[:-1]), c)
    emp = empirical_spectral_density(draws(dens, 400))
    sel = GRID.active & (GRID.k[..., 0] > 0)
    assert np.mean(emp.q01[sel].imag) == pytest.approx(0.4, abs=0.02)
    assert abs(np.mean(emp.q01[sel].real)) < 0.02


def test_real_space_variance_is_mode_sum():
    dens = generic_density(1.0, 1.0, 0.6, KGF)
    a, _, _ = dens.evaluate(GRID)
    target = a.sum() / GRID.volume
    est = np.mean([spatial_autocorrelation(s)[0, 0, 0] for s in draws(dens, 200)])
    assert est == pytest.approx(target, rel=0.05)
    s = draws(dens, 1)[0]
    assert spatial_autocorrelation(s)[0, 0, 0] == pytest.approx(np.mean(GRID.to_real(s.phi_hat) ** 2))


def test_psd_violation_is_reported():
    bad = SpectralDensity("bad", lambda k: np.ones(k.shape[:-1]), lambda k: np.ones(k.shape[:-1]),
                          lambda k: np.full(k.shape[:-1], 2.0 + 0j))
    with pytest.raises(ValueError, match="positive semidefinite"):
        sample_field(bad, GRID, 0)


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1), st.lists(st.integers(0, 50), min_size=1, max_size=4))
def test_batch_draws_equal_single_draws(base, members):
    dens = generic_density(1.0, 0.3, 0.5, WF)
    canon, selfv = sample_half_batch(dens, GRID, base, members)
    for j, i in enumerate(members):
        s = sample_field(dens, GRID, (base, i))
        full = GRID.expand_half(canon[j], selfv[j])
        np.testing.assert_array_equal(full[0], s.phi_hat)
        np.testing.assert_array_equal(full[1], s.pi_hat)


def test_density_validation():
    with pytest.raises(ValueError):
        gibbs_field_density(0.0, KGF)
    with pytest.raises(ValueError):
        gibbs_field_density(1.0, WF, include_zero_mode=True)
    with pytest.raises(ValueError):
        generic_density(1.0, 1.0, 0.0, KGF)
    with pytest.raises(ValueError):
        two_temperature_density(1.0, -1.0, 1.0, KGF)
    tab = tabulated_density("t", GRID, np.ones(GRID.shape), np.ones(GRID.shape))
    with pytest.raises(ValueError):
        tab.evaluate(ModeGrid(8.0, 4))


def test_smoothstep_endpoints_and_flatness():
    np.testing.assert_allclose(smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])), [0, 0, 0.5, 1, 1])
    h = 1e-4
    assert (smoothstep(h) - smoothstep(0.0)) / h < 1e-6


def test_interface_cutoffs():
    grid = ModeGrid(48.0, 48)
    zm, zp = interface_cutoffs(grid, 1.0)
    np.testing.assert_allclose(zm + zp, 1.0)
    x = np.arange(48) * grid.spacing
    assert np.all(zp[(x > 2) & (x < 22)] == 1) and np.all(zp[(x > 26) & (x < 46)] == 0)
    assert zp[0] == pytest.approx(0.5) and zp[24] == pytest.approx(0.5)
    for a in (0.0, 6.0):
        with pytest.raises(ValueError):
            interface_cutoffs(grid, a)


def test_two_temperature_composite():
    grid = ModeGrid(16.0, 16)
    comp, pm, pp = two_temperature_sample(1.0, 3.0, 1.0, grid, (4, 1), KGF, return_parts=True)
    np.testing.assert_allclose(comp.phi_hat, pm.phi_hat + pp.phi_hat, atol=1e-12)
    assert grid.is_hermitian(comp.pi_hat)
    canon, selfv = two_temperature_half_batch(1.0, 3.0, 1.0, grid, KGF, 4, [1])
    np.testing.assert_allclose(grid.expand_half(canon[0], selfv[0])[1], comp.pi_hat, atol=1e-12)
    with pytest.raises(ValueError):
        two_temperature_sample(1.0, 3.0, 1.0, grid, 0, WF)


def test_two_temperature_momentum_profile():
    # E pi(x)^2 follows zeta_-^2 T_- + zeta_+^2 T_+ times the white-noise level
    grid = ModeGrid(16.0, 16)
    Tm, Tp = 1.0, 3.0
    zm, zp = interface_cutoffs(grid, 1.0)
    prof = np.mean([np.mean(grid.to_real(two_temperature_sample(Tm, Tp, 1.0, grid, (9, i), KGF).pi_hat) ** 2,
                            axis=(1, 2)) for i in range(60)], axis=0)
    level = grid.active.sum() / grid.volume
    np.testing.assert_allclose(prof, level * (zm ** 2 * Tm + zp ** 2 * Tp), rtol=0.12)


def test_particle_laws():
    n = 40000
    q, p = sample_particle("gibbs_A", KGF, 1, T=2.0, size=n)
    assert q.var() == pytest.approx(2.0 / KGF.omega0 ** 2, rel=0.03) and p.var() == pytest.approx(2.0, rel=0.03)
    q, _ = sample_particle("gibbs_eff", KGF, 2, T=1.0, size=n)
    assert q.var() == pytest.approx(1 / (KGF.omega0 ** 2 - coupling_constant(KGF)), rel=0.03)
    C = np.diag([1.0, 2, 3, 0.5, 0.5, 0.5])
    C[0, 3] = C[3, 0] = 0.4
    q, p = sample_particle("covariance", KGF, 3, cov=C, size=n)
    np.testing.assert_allclose(np.cov(np.hstack([q, p]).T), C, atol=0.05)
    q, p = sample_particle("uniform", KGF, 4, scale=2.0, size=n)
    assert np.abs(q).max() <= 2 and q.var() == pytest.approx(4 / 3, rel=0.03)
    q1, _ = sample_particle("uniform", KGF, 4)
    q2, _ = sample_particle("uniform", KGF, 4, stream=1)
    assert q1.shape == (3,) and not np.allclose(q1, q2)


def test_particle_law_errors():
    with pytest.raises(ValueError):
        sample_particle("cauchy", KGF, 0)
    with pytest.raises(ValueError):
        sample_particle("covariance", KGF, 0, cov=np.eye(5))
    with pytest.raises(ValueError):
        sample_particle("covariance", KGF, 0, cov=-np.eye(6))
    with pytest.raises(ValueError):
        sample_particle("gibbs_eff", KGF, 0, kappa=10.0)


def test_field_sample_round_trip(tmp_path):
    s = sample_field(generic_density(1.0, 1.0, 0.5, KGF), GRID, (3, 4))
    s.save(tmp_path / "member")
    back = FieldSample.load(tmp_path / "member")
    np.testing.assert_array_equal(back.phi_hat, s.phi_hat)
    assert back.seed == (3, 4) and back.grid.npts == 8 and back.kind == "generic"
