"""Evolution of the coupled field-particle system on a periodic box.

Two integrators are provided:

* :func:`evolve_spectral_duhamel` advances every field mode exactly with the
  free propagator and adds the particle-driven Duhamel term, while the
  particle follows the Volterra equation with the box kernels.  The
  particle only couples to each ``|n|^2`` shell through three numbers, so
  the Duhamel integrals are accumulated per shell, exactly for the
  piecewise-linear interpolant of the particle path.
* :func:`evolve_leapfrog` is a Strang splitting of the full Hamiltonian:
  exact free rotations of field modes and oscillator for half steps around
  coupling kicks ``pi += dt q . grad rho`` and ``p += dt <grad rho, phi>``.

Both work in the box conventions of :mod:`fieldparticle.spectral_core`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import sparse

from .kernels import KernelTable, lattice_kernel_table, lattice_shell_weights, stability_scan
from .spectral_core import CouplingSpec, ModeGrid, coupling_fourier_radial, sin_over_omega
from .volterra import (ParticleTrajectory, ResolventTable, resolvent, solve_volterra_modal,
                       step_coefficients)

__all__ = [
    "SystemState",
    "EnergyBreakdown",
    "SystemTrajectory",
    "LatticeSystem",
    "hamiltonian",
    "t_map",
    "inverse_t_map",
    "force_history",
    "evolve_spectral_duhamel",
    "evolve_leapfrog",
    "evolve_ensemble",
    "free_evolve",
    "ShellReduction",
]


@dataclass
class SystemState:
    """Field pair in box coefficients plus particle position and momentum."""

    phi_hat: np.ndarray
    pi_hat: np.ndarray
    q: np.ndarray
    p: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(3)
        self.p = np.asarray(self.p, dtype=float).reshape(3)

    def copy(self) -> "SystemState":
        return SystemState(self.phi_hat.copy(), self.pi_hat.copy(), self.q.copy(), self.p.copy(), self.time)

    def reversed(self) -> "SystemState":
        """Time reversal ``(phi, pi, q, p) -> (phi, -pi, q, -p)``."""
        return SystemState(self.phi_hat.copy(), -self.pi_hat, self.q.copy(), -self.p, -self.time)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.phi_hat)) and np.all(np.isfinite(self.pi_hat))
                    and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)))


@dataclass
class EnergyBreakdown:
    H_total: float
    H_A: float
    H_B: float
    H_int: float
    H_eff_A: float
    H_B_psi: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SystemTrajectory:
    """Particle path at every step plus full states at the recorded steps."""

    particle: ParticleTrajectory
    record_times: np.ndarray
    states: list
    energies: list = field(default_factory=list)

    @property
    def final(self) -> SystemState:
        return self.states[-1]


class LatticeSystem:
    """Precomputed mode data for a coupling spec on a box grid."""

    def __init__(self, spec: CouplingSpec, grid: ModeGrid):
        self.spec = spec
        self.grid = grid

    @cached_property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.grid.kmag ** 2 + self.spec.m ** 2)

    @cached_property
    def rho_hat(self) -> np.ndarray:
        return np.where(self.grid.active, coupling_fourier_radial(self.spec, self.grid.kmag), 0.0)

    @cached_property
    def grad_rho(self) -> np.ndarray:
        """Box coefficients of ``grad rho``: ``-i k rho_hat``, shape ``(3, N, N, N)``."""
        return -1j * np.moveaxis(self.grid.k, -1, 0) * self.rho_hat

    @cached_property
    def h_hat(self) -> np.ndarray:
        """Coefficients of ``h = (Delta - m^2)^-1 grad rho``: ``i k rho_hat / omega^2``."""
        om2 = self.omega ** 2
        safe = np.where(om2 > 0, om2, 1.0)
        return np.where(om2 > 0, 1j * np.moveaxis(self.grid.k, -1, 0) * self.rho_hat / safe, 0.0)

    @cached_property
    def shell_data(self):
        om, W = lattice_shell_weights(self.spec, self.grid)
        return om, W

    @property
    def shell_omega(self) -> np.ndarray:
        return self.shell_data[0]

    @property
    def shell_weight(self) -> np.ndarray:
        return self.shell_data[1]

    @cached_property
    def kappa(self) -> float:
        om, W = self.shell_data
        keep = om > 0
        return float(np.sum(W[keep] / om[keep] ** 2))

    @cached_property
    def omega_max(self) -> float:
        return float(self.omega[self.grid.active].max())

    # half-space views
    @cached_property
    def canon(self) -> np.ndarray:
        return self.grid.canonical_index

    @cached_property
    def omega_half(self) -> np.ndarray:
        return self.omega.reshape(-1)[self.canon]

    @cached_property
    def omega_self(self) -> np.ndarray:
        return self.omega.reshape(-1)[self.grid.self_index]

    @cached_property
    def grad_rho_half(self) -> np.ndarray:
        return self.grad_rho.reshape(3, -1)[:, self.canon]

    @cached_property
    def h_half(self) -> np.ndarray:
        return self.h_hat.reshape(3, -1)[:, self.canon]

    @cached_property
    def shell_half(self) -> np.ndarray:
        return self.grid.shell_index.reshape(-1)[self.canon]

    @cached_property
    def shell_sum(self) -> sparse.csr_matrix:
        """Sparse ``(n_shells, n_canonical)`` indicator used to sum over shells."""
        n = self.canon.size
        return sparse.csr_matrix((np.ones(n), (self.shell_half, np.arange(n))), shape=(self.grid.n_shells, n))

    def shell_pairing(self, x_half: np.ndarray) -> np.ndarray:
        """``<x, grad_i rho restricted to shell s>`` for half-space arrays.

        ``x_half`` has shape ``(..., n_canonical)``; the result has shape
        ``(..., n_shells, 3)`` and is real.  The self-paired mode ``k = 0``
        carries no gradient coupling.
        """
        lead = x_half.shape[:-1]
        x2 = x_half.reshape(-1, x_half.shape[-1])
        out = np.empty((x2.shape[0], self.grid.n_shells, 3))
        for i in range(3):
            prod = x2 * np.conj(self.grad_rho_half[i])
            out[:, :, i] = (self.shell_sum @ prod.real.T).T
        out *= 2.0 / self.grid.volume
        return out.reshape(lead + (self.grid.n_shells, 3))

    def shell_field(self, S: np.ndarray) -> np.ndarray:
        """Half-space field ``sum_i grad_i rho(k) S[shell(k), i]`` from shell amplitudes ``(..., n_shells, 3)``."""
        Sk = S[..., self.shell_half, :]
        return np.einsum("...ki,ik->...k", Sk, self.grad_rho_half)

    def shell_field_full(self, S: np.ndarray) -> np.ndarray:
        idx = self.grid.shell_index
        out = np.zeros(self.grid.shape, dtype=complex)
        act = idx >= 0
        for i in range(3):
            out[act] += self.grad_rho[i][act] * S[idx[act], i]
        return out

    @lru_cache(maxsize=8)
    def kernel_table(self, dt: float, horizon: float) -> KernelTable:
        return lattice_kernel_table(self.spec, self.grid, dt, horizon)

    @lru_cache(maxsize=8)
    def resolvent(self, dt: float, horizon: float) -> ResolventTable:
        return resolvent(self.kernel_table(dt, horizon), dt, horizon, self.spec.omega0)

    def forcing_coefficients(self, phi_hat, pi_hat):
        """Shell amplitudes ``a_s = <phi, grad rho|_s>``, ``b_s = <pi, grad rho|_s>``."""
        ph, _ = self.grid.half_of(phi_hat)
        pi, _ = self.grid.half_of(pi_hat)
        return self.shell_pairing(ph), self.shell_pairing(pi)

    def forcing(self, a, b, times) -> np.ndarray:
        """``F(t) = sum_s cos(w_s t) a_s + sin(w_s t)/w_s b_s`` on an array of times.

        ``a`` and ``b`` have shape ``(..., n_shells, 3)``; the result has shape
        ``(len(times), ..., 3)``.
        """
        times = np.asarray(times, dtype=float)
        om = self.shell_omega
        ph = np.outer(times, om)
        C = np.cos(ph)
        S = sin_over_omega(om[None, :], times[:, None])
        lead = a.shape[:-2]
        a2 = np.moveaxis(a, -2, 0).reshape(len(om), -1)
        b2 = np.moveaxis(b, -2, 0).reshape(len(om), -1)
        out = C @ a2 + S @ b2
        return out.reshape((len(times),) + lead + (3,))

    def duhamel_amplitudes(self, Z):
        """``(S_phi, S_pi) = (Im Z / w_s, Re Z)`` from accumulators with the shell axis at ``-2``."""
        om = self.shell_omega[:, None]
        safe = np.where(om > 0, om, 1.0)
        return np.where(om > 0, Z.imag / safe, 0.0), Z.real

    def check_r1(self) -> bool:
        return self.spec.omega0 ** 2 - self.kappa > 0

    @cached_property
    def reduction(self) -> "ShellReduction":
        return ShellReduction(self)


def free_evolve(omega, phi, pi, t):
    """Exact free rotation of mode amplitudes by time ``t``."""
    c = np.cos(omega * t)
    s = sin_over_omega(omega, t)
    return c * phi + s * pi, -omega * omega * s * phi + c * pi


def _system(spec, grid, system):
    if system is not None:
        if system.spec != spec or system.grid != grid:
            raise ValueError("system does not match spec/grid")
        return system
    return _cached_system(spec, grid)


@lru_cache(maxsize=8)
def _cached_system(spec, grid):
    return LatticeSystem(spec, grid)


def hamiltonian(Y: SystemState, spec: CouplingSpec, grid: ModeGrid, system: LatticeSystem | None = None
                ) -> EnergyBreakdown:
    """Energy breakdown of a state.

    ``H_B = (2 L^3)^-1 sum_k (omega^2 |phi_hat|^2 + |pi_hat|^2)``,
    ``H_int = q . <grad phi, rho>`` and, in T-map variables,
    ``H_eff_A = |p|^2/2 + q.(omega0^2 - K) q / 2`` with the box ``K``.
    """
    sys_ = _system(spec, grid, system)
    vol = grid.volume
    om2 = sys_.omega ** 2
    HB = float(np.sum(om2 * np.abs(Y.phi_hat) ** 2 + np.abs(Y.pi_hat) ** 2) / (2 * vol))
    HA = 0.5 * float(Y.p @ Y.p + spec.omega0 ** 2 * Y.q @ Y.q)
    kvec = np.moveaxis(grid.k, -1, 0)
    grad_phi_rho = np.real(np.sum(-1j * kvec * Y.phi_hat * sys_.rho_hat, axis=(1, 2, 3))) / vol
    Hint = float(Y.q @ grad_phi_rho)
    psi = Y.phi_hat + np.tensordot(Y.q, sys_.h_hat, axes=(0, 0))
    HBpsi = float(np.sum(om2 * np.abs(psi) ** 2 + np.abs(Y.pi_hat) ** 2) / (2 * vol))
    Heff = 0.5 * float(Y.p @ Y.p + (spec.omega0 ** 2 - sys_.kappa) * Y.q @ Y.q)
    return EnergyBreakdown(HA + HB + Hint, HA, HB, Hint, Heff, HBpsi)


def _check_zero_mode(Y, spec, grid):
    if spec.m == 0 and abs(Y.phi_hat.reshape(-1)[grid.self_index].sum()) > 0:
        raise ValueError("the massless T-map needs the zero mode excluded (phi_hat(0) = 0)")


def t_map(Y: SystemState, spec: CouplingSpec, grid: ModeGrid, system: LatticeSystem | None = None
          ) -> SystemState:
    """``psi = phi + q . h`` with ``h = (Delta - m^2)^-1 grad rho``; ``pi``, ``q``, ``p`` unchanged."""
    _check_zero_mode(Y, spec, grid)
    sys_ = _system(spec, grid, system)
    psi = Y.phi_hat + np.tensordot(Y.q, sys_.h_hat, axes=(0, 0))
    return SystemState(psi, Y.pi_hat.copy(), Y.q.copy(), Y.p.copy(), Y.time)


def inverse_t_map(X: SystemState, spec: CouplingSpec, grid: ModeGrid, system: LatticeSystem | None = None
                  ) -> SystemState:
    """Inverse of :func:`t_map`: ``phi = psi - q . h``."""
    _check_zero_mode(X, spec, grid)
    sys_ = _system(spec, grid, system)
    phi = X.phi_hat - np.tensordot(X.q, sys_.h_hat, axes=(0, 0))
    return SystemState(phi, X.pi_hat.copy(), X.q.copy(), X.p.copy(), X.time)


def force_history(phi0, spec: CouplingSpec, grid: ModeGrid, times, system: LatticeSystem | None = None
                  ) -> np.ndarray:
    """``F(t) = <grad rho, W_t phi0>`` for a field pair ``phi0 = (phi_hat, pi_hat)``."""
    sys_ = _system(spec, grid, system)
    if hasattr(phi0, "phi_hat"):
        ph, pi = phi0.phi_hat, phi0.pi_hat
    else:
        ph, pi = phi0
    a, b = sys_.forcing_coefficients(ph, pi)
    return sys_.forcing(a, b, times)


_SCAN_CACHE: dict = {}


def _require_stable(spec, sys_, check):
    if not check:
        return
    if not sys_.check_r1():
        raise ValueError("omega0^2 - K (box) is not positive; the coupled system is unstable")
    rep = _SCAN_CACHE.get(spec)
    if rep is None:
        rep = _SCAN_CACHE[spec] = stability_scan(spec, n_scan=200)
    if not rep.stable:
        raise ValueError(f"stability scan failed: {rep.to_dict()}; pass check_stability=False to override")


def _wrap_warning(spec, grid, T):
    lim = grid.box_length / 2 - 4 * spec.sigma
    if abs(T) > lim:
        warnings.warn(f"horizon |T|={abs(T)} exceeds L/2 - 4 sigma = {lim}; periodic images reach the "
                      "coupling region", RuntimeWarning, stacklevel=3)


def _record_steps(n, record_every):
    if record_every is None:
        return [0, n]
    steps = list(range(0, n + 1, int(record_every)))
    if steps[-1] != n:
        steps.append(n)
    return steps


def evolve_spectral_duhamel(Y0: SystemState, spec: CouplingSpec, grid: ModeGrid, dt: float, T: float,
                            record_every: int | None = None, check_stability: bool = True,
                            energies: bool = False, system: LatticeSystem | None = None) -> SystemTrajectory:
    """Exact free field modes plus trapezoid Duhamel and Volterra particle.

    Negative ``T`` evolves backward through the time-reversal symmetry.
    States are recorded every ``record_every`` steps (default: start and end).
    """
    sys_ = _system(spec, grid, system)
    _require_stable(spec, sys_, check_stability)
    _wrap_warning(spec, grid, T)
    if T < 0:
        R0 = Y0.reversed()
        R0.time = 0.0
        tr = evolve_spectral_duhamel(R0, spec, grid, dt, -T, record_every, False, energies, sys_)
        times = Y0.time - tr.record_times
        states = []
        for s, t in zip(tr.states, times):
            r = s.reversed()
            r.time = t
            states.append(r)
        part = ParticleTrajectory(tr.particle.dt, tr.particle.q, -tr.particle.p, "reversed")
        return SystemTrajectory(part, times, states, tr.energies)
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    a, b = sys_.forcing_coefficients(Y0.phi_hat, Y0.pi_hat)
    times = dt * np.arange(n + 1)
    F = sys_.forcing(a, b, times)
    rec = _record_steps(n, record_every)
    traj, Zs = solve_volterra_modal(sys_.shell_omega, sys_.shell_weight, F, Y0.q, Y0.p, dt, n * dt,
                                    spec.omega0, record=rec, forcing_id="field")
    states, ens = [], []
    for j in rec:
        Sphi, Spi = sys_.duhamel_amplitudes(Zs[j])
        ph, pi = free_evolve(sys_.omega, Y0.phi_hat, Y0.pi_hat, times[j])
        st = SystemState(grid.symmetrize(ph + sys_.shell_field_full(Sphi)),
                         grid.symmetrize(pi + sys_.shell_field_full(Spi)), traj.q[j], traj.p[j],
                         Y0.time + times[j])
        states.append(st)
        if energies:
            ens.append(hamiltonian(st, spec, grid, sys_))
    return SystemTrajectory(traj, Y0.time + times[rec], states, ens)


def evolve_leapfrog(Y0: SystemState, spec: CouplingSpec, grid: ModeGrid, dt: float, T: float,
                    record_every: int | None = None, energies: bool = False,
                    system: LatticeSystem | None = None) -> SystemTrajectory:
    """Strang splitting: free half steps around coupling kicks.

    Requires ``dt < 2 / omega_max`` (the grid's CFL bound).
    """
    sys_ = _system(spec, grid, system)
    if not dt < 2.0 / sys_.omega_max:
        raise ValueError(f"dt={dt} violates the CFL bound 2/omega_max = {2.0 / sys_.omega_max:.4g}")
    _wrap_warning(spec, grid, T)
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    om = sys_.omega_half
    c_half = np.cos(om * dt / 2)
    s_half = sin_over_omega(om, dt / 2)
    g = sys_.grad_rho_half
    gconj = np.conj(g)
    vol = grid.volume
    phc, _ = grid.half_of(Y0.phi_hat)
    pic, _ = grid.half_of(Y0.pi_hat)
    phs = Y0.phi_hat.reshape(-1)[grid.self_index].real.copy()
    pis = Y0.pi_hat.reshape(-1)[grid.self_index].real.copy()
    oms = sys_.omega_self
    phc, pic = phc.copy(), pic.copy()
    q, p = Y0.q.copy(), Y0.p.copy()
    cf = step_coefficients(spec.omega0 ** 2, dt / 2)
    hc, hs, hu = cf["c"], cf["s"], cf["u"]

    def half_free(phc, pic, q, p):
        phc, pic = c_half * phc + s_half * pic, -om * om * s_half * phc + c_half * pic
        return phc, pic, hc * q + hs * p, hu * q + hc * p

    Q = np.empty((n + 1, 3))
    P = np.empty((n + 1, 3))
    Q[0], P[0] = q, p
    rec = set(_record_steps(n, record_every))
    states, ens = [], []

    def snapshot(j, phc, pic, q, p):
        t = j * dt
        sph, spi = free_evolve(oms, phs, pis, t)
        st = SystemState(grid.expand_half(phc, sph), grid.expand_half(pic, spi), q, p, Y0.time + t)
        states.append(st)
        if energies:
            ens.append(hamiltonian(st, spec, grid, sys_))

    if 0 in rec:
        snapshot(0, phc, pic, q, p)
    for j in range(1, n + 1):
        phc, pic, q, p = half_free(phc, pic, q, p)
        pic = pic + dt * (q @ g)
        p = p + dt * (2.0 / vol) * np.real(gconj @ phc)
        phc, pic, q, p = half_free(phc, pic, q, p)
        Q[j], P[j] = q, p
        if j in rec:
            snapshot(j, phc, pic, q, p)
    return SystemTrajectory(ParticleTrajectory(dt, Q, P, "leapfrog"), Y0.time + dt * np.array(sorted(rec)),
                            states, ens)


def evolve_ensemble(system: LatticeSystem, phi_half, pi_half, phi_self, pi_self, q0, p0, dt: float, T: float,
                    chunk: int = 256):
    """Batched spectral-Duhamel evolution of many members to time ``T``.

    Inputs are half-space arrays with a leading member axis
    (``(M, n_canonical)``, ``(M, n_self)``) and particle arrays ``(M, 3)``.
    Uses the same discrete scheme as :func:`evolve_spectral_duhamel`.
    Returns ``(phi_half, pi_half, phi_self, pi_self, q, p)`` at time ``T``.
    """
    n = int(round(T / dt))
    times = dt * np.arange(n + 1)
    oh = system.omega_half
    M = phi_half.shape[0]
    out = [np.empty_like(phi_half), np.empty_like(pi_half), np.empty_like(phi_self), np.empty_like(pi_self),
           np.empty((M, 3)), np.empty((M, 3))]
    for s in range(0, M, chunk):
        sl = slice(s, s + chunk)
        a = system.shell_pairing(phi_half[sl])
        b = system.shell_pairing(pi_half[sl])
        F = system.forcing(a, b, times)
        tr, Zs = solve_volterra_modal(system.shell_omega, system.shell_weight, F, q0[sl], p0[sl], dt, n * dt,
                                      system.spec.omega0, record=(n,))
        Sphi, Spi = system.duhamel_amplitudes(np.moveaxis(Zs[n], 0, -2))
        ph, pi = free_evolve(oh, phi_half[sl], pi_half[sl], times[-1])
        out[0][sl] = ph + system.shell_field(Sphi)
        out[1][sl] = pi + system.shell_field(Spi)
        out[2][sl], out[3][sl] = free_evolve(system.omega_self, phi_self[sl], pi_self[sl], times[-1])
        out[4][sl], out[5][sl] = tr.q[-1], tr.p[-1]
    return tuple(out)


class ShellReduction:
    """Exact solution of the particle plus its shell coordinates.

    The particle only sees ``X_s = <phi, grad rho|_s>`` and
    ``B_s = <pi, grad rho|_s>``, which obey
    ``X_s'' = -w_s^2 X_s + W_s q`` while ``q'' = -omega0^2 q + sum_s X_s``.
    In the scaled coordinates ``y_s = X_s / sqrt(W_s)`` this is
    ``x'' = -K x`` with a symmetric ``K`` (arrowhead matrix), positive
    definite exactly when ``omega0^2 > K_box``.  One eigendecomposition gives
    the state at any time without time stepping; it serves as the ensemble
    engine and as a third, exact reference for the integrators.
    """

    def __init__(self, system: LatticeSystem, w_floor: float = 1e-280):
        self.system = system
        om, W = system.shell_omega, system.shell_weight
        self.mask = (W > w_floor) & (om > 0)
        self.om = om[self.mask]
        self.W = W[self.mask]
        self.sw = np.sqrt(self.W)
        n = self.om.size + 1
        K = np.zeros((n, n))
        K[0, 0] = system.spec.omega0 ** 2
        K[0, 1:] = K[1:, 0] = -self.sw
        K[np.arange(1, n), np.arange(1, n)] = self.om ** 2
        lam2, V = np.linalg.eigh(K)
        if lam2.min() <= 0:
            raise ValueError("reduced stiffness matrix is not positive definite (omega0^2 <= K_box)")
        self.lam = np.sqrt(lam2)
        self.V = V

    @property
    def n_coupled(self) -> int:
        return self.om.size

    def _trig(self, t):
        c = np.cos(self.lam * t)
        return c, sin_over_omega(self.lam, t), -self.lam * np.sin(self.lam * t)

    def propagate(self, x0, v0, t):
        """``(x(t), x'(t))`` for columns of initial data in the scaled coordinates."""
        c, s, d = self._trig(t)
        a = self.V.T @ x0
        b = self.V.T @ v0
        return self.V @ (c[:, None] * a + s[:, None] * b), self.V @ (d[:, None] * a + c[:, None] * b)

    def response(self, times):
        """``(N, N', N'')`` of the particle at ``times`` (scalar multiples of the identity)."""
        t = np.asarray(times, dtype=float)[:, None]
        w2 = self.V[0] ** 2
        lam = self.lam
        return (np.sum(w2 * sin_over_omega(lam, t), axis=1), np.sum(w2 * np.cos(lam * t), axis=1),
                np.sum(-w2 * lam * np.sin(lam * t), axis=1))

    def evolve(self, q0, p0, a, b, t):
        """Particle and shell Duhamel amplitudes at time ``t``.

        ``q0``, ``p0`` have shape ``(M, 3)`` and ``a``, ``b`` (shell
        amplitudes of the initial field) shape ``(M, n_shells, 3)``.
        Returns ``(q, p, S_phi, S_pi)`` with the field at ``t`` equal to the
        free evolution plus ``sum_i grad_i rho(k) S[shell(k), i]``.
        """
        M = q0.shape[0]
        am = a[:, self.mask, :]
        bm = b[:, self.mask, :]
        # columns are (member, component) pairs
        x0 = np.concatenate([q0.reshape(M, 1, 3), am / self.sw[None, :, None]], axis=1)
        v0 = np.concatenate([p0.reshape(M, 1, 3), bm / self.sw[None, :, None]], axis=1)
        x0 = np.moveaxis(x0, 1, 0).reshape(self.n_coupled + 1, -1)
        v0 = np.moveaxis(v0, 1, 0).reshape(self.n_coupled + 1, -1)
        x, v = self.propagate(x0, v0, t)
        x = np.moveaxis(x.reshape(self.n_coupled + 1, M, 3), 0, 1)
        v = np.moveaxis(v.reshape(self.n_coupled + 1, M, 3), 0, 1)
        om = self.om[None, :, None]
        W = self.W[None, :, None]
        Xf = np.cos(om * t) * am + sin_over_omega(om, t) * bm
        Bf = -om * np.sin(om * t) * am + np.cos(om * t) * bm
        ns = self.system.grid.n_shells
        Sphi = np.zeros((M, ns, 3))
        Spi = np.zeros((M, ns, 3))
        Sphi[:, self.mask] = (self.sw[None, :, None] * x[:, 1:] - Xf) / W
        Spi[:, self.mask] = (self.sw[None, :, None] * v[:, 1:] - Bf) / W
        return x[:, 0], v[:, 0], Sphi, Spi

    def adjoint_coefficients(self, t, u, v, P0, P1):
        """Coefficients of a linear observable at time ``t`` on the initial features.

        The observable is ``u.q(t) + v.p(t) + sum_{s,i} (S_phi P0 + S_pi P1)``
        where ``P0``, ``P1`` (shape ``(n_shells, 3)``) are shell pairings of
        the observable's field part.  Returns ``(U, V, Ca, Cb)`` such that it
        equals ``U.q0 + V.p0 + sum (Ca a + Cb b)``.
        """
        P0m = P0[self.mask]
        P1m = P1[self.mask]
        lx = np.vstack([np.asarray(u, dtype=float)[None], P0m / self.sw[:, None]])
        lv = np.vstack([np.asarray(v, dtype=float)[None], P1m / self.sw[:, None]])
        c, s, d = self._trig(t)
        A = self.V.T @ lx
        B = self.V.T @ lv
        cx = self.V @ (c[:, None] * A + d[:, None] * B)
        cv = self.V @ (s[:, None] * A + c[:, None] * B)
        om = self.om[:, None]
        W = self.W[:, None]
        ns = self.system.grid.n_shells
        Ca = np.zeros((ns, 3))
        Cb = np.zeros((ns, 3))
        Ca[self.mask] = (cx[1:] / self.sw[:, None] - P0m * np.cos(om * t) / W
                         + P1m * om * np.sin(om * t) / W)
        Cb[self.mask] = (cv[1:] / self.sw[:, None] - P0m * sin_over_omega(om, t) / W
                         - P1m * np.cos(om * t) / W)
        return cx[0], cv[0], Ca, Cb
