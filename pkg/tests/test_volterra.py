import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.linalg import expm

from fieldparticle.kernels import KernelTable, build_kernel_table, lattice_kernel_table, lattice_shell_weights
from fieldparticle.spectral_core import CouplingSpec, ModeGrid
from fieldparticle.volterra import (ParticleTrajectory, decay_bound_constant, fit_decay, product_weights, resolvent,
                                    solve_langevin, solve_volterra, solve_volterra_modal, step_coefficients)

from conftest import KGF, WF


def free_table(omega0, dt, T):
    return build_kernel_table(CouplingSpec(g=0.0, omega0=omega0), dt, T)


@given(st.floats(-4.0, 9.0), st.floats(0.01, 0.5), st.floats(-2, 2), st.floats(-2, 2))
def test_step_coefficients_solve_linear_forcing_exactly(w2, h, g0, g1):
    cf = step_coefficients(w2, h)
    x0, v0 = 0.7, -0.3

    def rhs(t, y):
        return [y[1], -w2 * y[0] + g0 + (g1 - g0) * t / h]

    ref = solve_ivp(rhs, (0, h), [x0, v0], rtol=1e-12, atol=1e-14).y[:, -1]
    x1 = cf["c"] * x0 + cf["s"] * v0 + (cf["A0"] - cf["A1"]) * g0 + cf["A1"] * g1
    v1 = cf["u"] * x0 + cf["c"] * v0 + (cf["B0"] - cf["B1"]) * g0 + cf["B1"] * g1
    np.testing.assert_allclose([x1, v1], ref, atol=1e-10)


def test_step_coefficients_continuous_across_series_switch():
    h = 0.1
    below = step_coefficients(1e-4 * (1 - 1e-9), h)
    above = step_coefficients(1e-4 * (1 + 1e-9), h)
    for key in below:
        assert below[key] == pytest.approx(above[key], rel=1e-8, abs=1e-15)


def test_free_oscillator_is_exact():
    w0, dt, T = 1.5, 0.05, 20.0
    tr = solve_volterra(free_table(w0, dt, T), None, [1.0, 0.0, -0.5], [0.0, 2.0, 0.0], dt, T, w0)
    t = tr.times
    np.testing.assert_allclose(tr.q[:, 0], np.cos(w0 * t), atol=1e-12)
    np.testing.assert_allclose(tr.q[:, 1], 2 * np.sin(w0 * t) / w0, atol=1e-12)
    np.testing.assert_allclose(tr.p[:, 2], 0.5 * w0 * np.sin(w0 * t), atol=1e-12)


def test_forced_oscillator_converges_at_second_order():
    # q'' = -w0^2 q + sin(nu t) from rest, closed form by undetermined coefficients
    w0, nu, T = 1.5, 2.3, 10.0
    exact = np.sin(nu * T) / (w0 ** 2 - nu ** 2) - nu * np.sin(w0 * T) / (w0 * (w0 ** 2 - nu ** 2))
    errs = []
    for dt in (0.1, 0.05, 0.025):
        F = lambda t: np.sin(nu * t)[:, None] * np.array([1.0, 0.0, 0.0])
        tr = solve_volterra(free_table(w0, dt, T), F, np.zeros(3), np.zeros(3), dt, T, w0)
        errs.append(abs(tr.q[-1, 0] - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(orders, 2.0, atol=0.15)


@pytest.mark.parametrize("omega", [0.0, 3.0, 40.0, 400.0])
def test_product_weights_match_quadrature(omega):
    h = 0.01
    ker = lambda tau: np.exp(1j * omega * (h - tau))

    def cquad(f):
        return quad(lambda x: f(x).real, 0, h, epsabs=1e-16)[0] + 1j * quad(lambda x: f(x).imag, 0, h, epsabs=1e-16)[0]

    a_ref = cquad(lambda tau: ker(tau) * (1 - tau / h))
    b_ref = cquad(lambda tau: ker(tau) * tau / h)
    a, b = product_weights(np.array([omega]), h)
    assert a[0] == pytest.approx(a_ref, rel=1e-10, abs=1e-18)
    assert b[0] == pytest.approx(b_ref, rel=1e-10, abs=1e-18)


def test_single_mode_memory_matches_extended_linear_system():
    # D(t) = W sin(w t)/w is the memory of q'' = -w0^2 q + W X with X'' = -w^2 X + q
    w0, w, W = 1.5, 0.8, 0.6
    dt, T = 0.01, 15.0
    q0, p0 = np.array([0.4, -0.2, 0.1]), np.array([0.0, 0.3, -0.5])
    tr, _ = solve_volterra_modal([w], [W], None, q0, p0, dt, T, w0)
    M = np.array([[0, 1, 0, 0], [-w0 ** 2, 0, W, 0], [0, 0, 0, 1], [1, 0, -w ** 2, 0]], dtype=float)
    E = expm(M * T)
    for i in range(3):
        y = E @ np.array([q0[i], p0[i], 0.0, 0.0])
        assert tr.q[-1, i] == pytest.approx(y[0], abs=1e-4)
        assert tr.p[-1, i] == pytest.approx(y[1], abs=1e-4)


def test_modal_accumulators_match_definition():
    w, dt, T = 0.9, 0.01, 4.0
    tr, Z = solve_volterra_modal([w], [0.3], None, [1.0, 0, 0], [0, 0, 0], dt, T, 1.2, record=[400])
    t = tr.times
    ref = np.trapezoid(np.exp(1j * w * (T - t)) * tr.q[:, 0], t)
    assert Z[400][0, 0] == pytest.approx(ref, abs=1e-4)


def test_modal_and_table_solvers_agree_on_a_box_kernel():
    grid = ModeGrid(16.0, 16)
    om, W = lattice_shell_weights(KGF, grid)
    dt, T = 0.01, 10.0
    tab = lattice_kernel_table(KGF, grid, dt, T)
    q0, p0 = np.array([0.2, 0.0, -0.1]), np.array([0.0, 0.4, 0.0])
    a = solve_volterra(tab, None, q0, p0, dt, T)
    b, _ = solve_volterra_modal(om, W, None, q0, p0, dt, T, KGF.omega0)
    np.testing.assert_allclose(a.q, b.q, atol=1e-5)


def test_langevin_form_equals_volterra_form():
    # integrating the memory by parts turns the initial datum into F_eff = -Gamma(t) q0
    dt, T = 0.01, 12.0
    tab = build_kernel_table(WF, dt, T)
    q0, p0 = np.array([0.5, -0.3, 0.2]), np.array([0.1, 0.0, -0.4])
    v = solve_volterra(tab, None, q0, p0, dt, T)
    Feff = lambda t: -tab.gamma[:, None] * q0
    lg = solve_langevin(tab, Feff, q0, p0, dt, T)
    np.testing.assert_allclose(v.q, lg.q, atol=5e-5)
    np.testing.assert_allclose(v.p, lg.p, atol=5e-5)


def test_batched_runs_match_single_runs():
    dt, T = 0.02, 5.0
    tab = build_kernel_table(KGF, dt, T)
    q0 = np.array([[1.0, 0, 0], [0, 0.5, 0]])
    p0 = np.array([[0, 0, 0.2], [0.1, 0, 0]])
    batch = solve_volterra(tab, None, q0, p0, dt, T)
    for m in range(2):
        single = solve_volterra(tab, None, q0[m], p0[m], dt, T)
        np.testing.assert_allclose(batch.q[:, m], single.q, atol=1e-14)


def test_resolvent_initial_values_and_free_limit():
    w0, dt, T = 2.0, 0.01, 10.0
    R = resolvent(free_table(w0, dt, T), dt, T)
    assert (R.n[0], R.ndot[0], R.nddot[0]) == (0.0, 1.0, 0.0)
    np.testing.assert_allclose(R.n, np.sin(w0 * R.times) / w0, atol=1e-12)
    # the free envelope is the constant amplitude of the position column
    np.testing.assert_allclose(R.envelope(), np.sqrt(3.0) / w0, rtol=1e-10)
    q, p = R.apply([1.0, 0, 0], [0, 1.0, 0])
    np.testing.assert_allclose(q[:, 1], R.n)
    np.testing.assert_allclose(R.V(0), np.eye(6))


def test_resolvent_velocity_columns_agree():
    R = resolvent(build_kernel_table(KGF, 0.02, 40.0), 0.02, 40.0)
    np.testing.assert_allclose(R.ndot, R.ndot_check, atol=1e-4)


def test_fit_decay_recovers_synthetic_laws():
    t = np.linspace(0, 60, 3001)
    f = fit_decay(t, (10, 50), "exponential", 2.0 * np.exp(-0.3 * t))
    assert f.rate == pytest.approx(0.3, rel=1e-10) and f.r_squared == pytest.approx(1.0)
    f = fit_decay(t, (10, 50), "power", 5.0 * (1 + t) ** -1.5)
    assert f.exponent == pytest.approx(-1.5, rel=1e-10)
    with pytest.raises(ValueError):
        fit_decay(t, (10, 80), "power", t)
    with pytest.raises(ValueError):
        fit_decay(t, (10, 10.05), "power", t)
    with pytest.raises(ValueError):
        fit_decay(t, (10, 50), "stretched", t)


def test_decay_bound_constant():
    t = np.linspace(0, 5, 11)
    assert decay_bound_constant(t, 3 * np.exp(-t), lambda s: np.exp(-s)) == pytest.approx(3.0)


def test_solver_input_errors():
    tab = build_kernel_table(WF, 0.01, 2.0)
    with pytest.raises(ValueError):
        solve_volterra(tab, None, np.zeros(3), np.zeros(3), 0.01, 3.0)
    with pytest.raises(ValueError):
        solve_volterra(tab, None, np.zeros(3), np.zeros(3), 0.03, 1.0)
    with pytest.raises(ValueError):
        solve_volterra(tab, None, np.zeros(2), np.zeros(2), 0.01, 1.0)
    bare = KernelTable(0.01, tab.d, tab.gamma, tab.kappa)
    with pytest.raises(ValueError):
        solve_volterra(bare, None, np.zeros(3), np.zeros(3), 0.01, 1.0)
    with pytest.raises(ValueError):
        ParticleTrajectory(0.1, np.zeros((3, 3)), np.zeros((2, 3)))


def test_trajectory_csv(tmp_path):
    tr = solve_volterra(free_table(1.0, 0.1, 1.0), None, [1.0, 0, 0], [0, 0, 0], 0.1, 1.0)
    path = tmp_path / "traj.csv"
    tr.to_csv(path, header_comment="stamp")
    lines = path.read_text().splitlines()
    assert lines[0] == "# stamp" and lines[1].startswith("t,") and len(lines) == 13
