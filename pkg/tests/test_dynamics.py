import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldparticle.acceptance import localized_state, over_coupled
from fieldparticle.dynamics import (LatticeSystem, ShellReduction, SystemState, evolve_ensemble, evolve_leapfrog,
                                    evolve_spectral_duhamel, force_history, free_evolve, hamiltonian,
                                    inverse_t_map, t_map)
from fieldparticle.random_fields import generic_density, sample_field
from fieldparticle.spectral_core import CouplingSpec, ModeGrid

from conftest import KGF, WF

GRID = ModeGrid(16.0, 16)


def rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def test_uncoupled_system_evolves_freely():
    spec = CouplingSpec(g=0.0, m=1.0, omega0=1.3)
    Y0 = localized_state(GRID, spec)
    tr = evolve_spectral_duhamel(Y0, spec, GRID, 0.05, 3.0, check_stability=False)
    t = 3.0
    w = spec.omega0
    np.testing.assert_allclose(tr.final.q, Y0.q * np.cos(w * t) + Y0.p * np.sin(w * t) / w, atol=1e-13)
    om = np.sqrt(GRID.kmag ** 2 + 1.0)
    ph, _ = free_evolve(om, Y0.phi_hat, Y0.pi_hat, t)
    assert rel(tr.final.phi_hat, GRID.symmetrize(ph)) < 1e-12


def test_duhamel_conserves_energy(kgf_small):
    Y0 = localized_state(GRID, KGF)
    tr = evolve_spectral_duhamel(Y0, KGF, GRID, 0.01, 4.0, record_every=50, energies=True, system=kgf_small)
    E = np.array([e.H_total for e in tr.energies])
    assert np.max(np.abs(E - E[0])) / E[0] < 1e-5


def test_energy_splits_into_effective_parts(wf_small):
    # H = H_eff_A(q, p) + H_B(psi, pi) exactly under the T-map
    Y = sample_field(generic_density(1.0, 1.0, 0.5, WF), GRID, 3)
    st_ = SystemState(Y.phi_hat, Y.pi_hat, [0.4, -1.0, 0.3], [0.2, 0.0, 0.5])
    e = hamiltonian(st_, WF, GRID, wf_small)
    assert e.H_total == pytest.approx(e.H_eff_A + e.H_B_psi, rel=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-4, 0), st.floats(0, 2))
def test_stable_hamiltonian_is_nonnegative(seed, log_scale, c):
    sys_ = LatticeSystem(KGF, GRID)
    rng = np.random.default_rng(seed)
    Y = sample_field(generic_density(1.0, 1.0, 0.5, KGF), GRID, seed % 1000)
    q = rng.normal(size=3)
    # pull the field toward -q.h, where H_int is most negative
    phi = 10 ** log_scale * Y.phi_hat - c * np.tensordot(q, sys_.h_hat, axes=(0, 0))
    st_ = SystemState(phi, 10 ** log_scale * Y.pi_hat, q, rng.normal(size=3))
    assert hamiltonian(st_, KGF, GRID, sys_).H_total >= 0


def test_t_map_round_trip(wf_small):
    Y0 = localized_state(GRID, WF)
    back = inverse_t_map(t_map(Y0, WF, GRID, wf_small), WF, GRID, wf_small)
    assert rel(back.phi_hat, Y0.phi_hat) < 1e-14
    bad = Y0.copy()
    bad.phi_hat[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        t_map(bad, WF, GRID)


def test_force_history_matches_direct_pairing(kgf_small):
    Y0 = localized_state(GRID, KGF)
    times = np.array([0.0, 0.7, 2.5])
    F = force_history(Y0, KGF, GRID, times, kgf_small)
    for j, t in enumerate(times):
        ph, _ = free_evolve(kgf_small.omega, Y0.phi_hat, Y0.pi_hat, t)
        direct = [GRID.pairing(kgf_small.grad_rho[i], ph) for i in range(3)]
        np.testing.assert_allclose(F[j], direct, atol=1e-12)


def test_time_reversal_returns_initial_state(kgf_small):
    Y0 = localized_state(GRID, KGF)
    fwd = evolve_spectral_duhamel(Y0, KGF, GRID, 0.01, 3.0, system=kgf_small).final
    back = evolve_spectral_duhamel(fwd, KGF, GRID, 0.01, -3.0, system=kgf_small).final
    np.testing.assert_allclose(back.q, Y0.q, atol=1e-6)
    np.testing.assert_allclose(back.p, Y0.p, atol=1e-6)
    assert rel(back.phi_hat, Y0.phi_hat) < 1e-5
    assert back.time == pytest.approx(0.0)


def exact_particle(system, Y0, t):
    a, b = system.forcing_coefficients(Y0.phi_hat, Y0.pi_hat)
    q, p, Sphi, Spi = system.reduction.evolve(Y0.q[None], Y0.p[None], a[None], b[None], t)
    return q[0], p[0], Sphi[0], Spi[0]


def test_duhamel_matches_exact_shell_reduction(kgf_small):
    Y0 = localized_state(GRID, KGF)
    q, p, Sphi, Spi = exact_particle(kgf_small, Y0, 4.0)
    errs = []
    for dt in (0.02, 0.01):
        tr = evolve_spectral_duhamel(Y0, KGF, GRID, dt, 4.0, system=kgf_small)
        errs.append(np.max(np.abs(tr.final.q - q)) + np.max(np.abs(tr.final.p - p)))
    assert errs[1] < 1e-4 and 3.5 < errs[0] / errs[1] < 4.5
    ph, _ = free_evolve(kgf_small.omega, Y0.phi_hat, Y0.pi_hat, 4.0)
    exact_phi = GRID.symmetrize(ph + kgf_small.shell_field_full(Sphi))
    assert rel(tr.final.phi_hat, exact_phi) < 1e-4


def test_leapfrog_is_second_order(kgf_small):
    Y0 = localized_state(GRID, KGF)
    q_ex, *_ = exact_particle(kgf_small, Y0, 2.0)
    errs = [np.max(np.abs(evolve_leapfrog(Y0, KGF, GRID, dt, 2.0, system=kgf_small).final.q - q_ex))
            for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(orders, 2.0, atol=0.2)


def test_reduction_response_matches_volterra_resolvent(kgf_small):
    R = kgf_small.resolvent(0.01, 10.0)
    n, nd, ndd = kgf_small.reduction.response(R.times)
    np.testing.assert_allclose(R.n, n, atol=5e-5)
    np.testing.assert_allclose(R.ndot, nd, atol=5e-5)


def test_ensemble_engine_matches_single_runs(kgf_small):
    dens = generic_density(1.0, 0.5, 0.5, KGF)
    samples = [sample_field(dens, GRID, (1, i)) for i in range(3)]
    halves = [(GRID.half_of(s.phi_hat), GRID.half_of(s.pi_hat)) for s in samples]
    ph = np.stack([h[0][0] for h in halves])
    pi = np.stack([h[1][0] for h in halves])
    phs = np.stack([h[0][1] for h in halves])
    pis = np.stack([h[1][1] for h in halves])
    q0 = np.array([[0.1, 0, 0], [0, 0.2, 0], [0, 0, -0.3]])
    p0 = np.zeros((3, 3))
    out = evolve_ensemble(kgf_small, ph, pi, phs, pis, q0, p0, 0.02, 2.0, chunk=2)
    for m, s in enumerate(samples):
        single = evolve_spectral_duhamel(SystemState(s.phi_hat, s.pi_hat, q0[m], p0[m]), KGF, GRID, 0.02, 2.0,
                                         system=kgf_small).final
        np.testing.assert_allclose(out[4][m], single.q, atol=1e-12)
        full = GRID.expand_half(out[0][m], out[2][m])
        assert rel(full, single.phi_hat) < 1e-10


def test_adjoint_coefficients_reproduce_forward_observable(kgf_small, rng):
    red = kgf_small.reduction
    ns = GRID.n_shells
    q0, p0 = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    a, b = rng.normal(size=(1, ns, 3)), rng.normal(size=(1, ns, 3))
    u, v = rng.normal(size=3), rng.normal(size=3)
    P0, P1 = rng.normal(size=(ns, 3)), rng.normal(size=(ns, 3))
    t = 3.7
    q, p, Sphi, Spi = red.evolve(q0, p0, a, b, t)
    forward = u @ q[0] + v @ p[0] + np.sum(Sphi[0] * P0 + Spi[0] * P1)
    U, V, Ca, Cb = red.adjoint_coefficients(t, u, v, P0, P1)
    assert U @ q0[0] + V @ p0[0] + np.sum(Ca * a[0] + Cb * b[0]) == pytest.approx(forward, rel=1e-9)


def test_adjoint_at_time_zero_is_identity(kgf_small, rng):
    red = kgf_small.reduction
    ns = GRID.n_shells
    u, v = rng.normal(size=3), rng.normal(size=3)
    U, V, Ca, Cb = red.adjoint_coefficients(0.0, u, v, np.zeros((ns, 3)), np.zeros((ns, 3)))
    np.testing.assert_allclose(U, u, atol=1e-12)
    np.testing.assert_allclose(V, v, atol=1e-12)
    assert np.max(np.abs(Ca)) < 1e-10 and np.max(np.abs(Cb)) < 1e-10


def test_integrator_guards(kgf_small):
    Y0 = localized_state(GRID, KGF)
    with pytest.raises(ValueError, match="CFL"):
        evolve_leapfrog(Y0, KGF, GRID, 1.0, 2.0)
    with pytest.raises(ValueError):
        evolve_spectral_duhamel(Y0, KGF, GRID, 0.03, 1.0)
    with pytest.raises(ValueError):
        evolve_spectral_duhamel(Y0, KGF.scaled(3.0), GRID, 0.01, 1.0)
    with pytest.raises(ValueError):
        ShellReduction(LatticeSystem(over_coupled(KGF), GRID))
    with pytest.raises(ValueError):
        evolve_spectral_duhamel(Y0, WF, GRID, 0.01, 1.0, system=kgf_small)
    with pytest.warns(RuntimeWarning, match="periodic images"):
        evolve_spectral_duhamel(Y0, KGF, GRID, 0.1, 6.0, system=kgf_small)


def test_trajectory_records_requested_steps(kgf_small):
    Y0 = localized_state(GRID, KGF)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tr = evolve_spectral_duhamel(Y0, KGF, GRID, 0.1, 1.0, record_every=3, system=kgf_small)
    np.testing.assert_allclose(tr.record_times, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert tr.particle.q.shape == (11, 3) and all(s.is_finite() for s in tr.states)
