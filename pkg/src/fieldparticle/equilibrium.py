"""Limit objects of the coupled dynamics and Monte-Carlo checks against them.

Observables are triples ``Z = (f, u, v)`` paired with a state as
``<Y, Z> = <phi, f^0> + <pi, f^1> + q.u + p.v``.  The long-time limit of
``<Y_t, Z>`` is ``<W_t phi_0, Pi(Z)>`` with the projected observable
``Pi(Z) = f_* + alpha.u + beta.v`` built from the particle resolvent ``N``.
Everything that touches the particle enters through the ``|n|^2`` shells of
the box, so ``alpha``, ``beta`` and ``f_*`` are assembled from per-shell time
integrals.

Ensembles are evaluated through adjoint observables: ``<Y_t, Z> = <Y_0, S'_t Z>``
with ``S'_t Z`` obtained exactly from the shell reduction, so a large
ensemble costs one pairing per member and observable.
"""
from __future__ import annotations

import csv
import json
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import LatticeSystem, SystemState
from .random_fields import (SpectralDensity, gibbs_field_density, sample_half_batch, sample_particle,
                            tabulated_density, two_temperature_half_batch)
from .spectral_core import ModeGrid, sin_over_omega
from .stats import covariance_with_se, excess_kurtosis_with_se, mean_with_se, zscore
from .volterra import ResolventTable

__all__ = [
    "Observable",
    "ProjectedObservable",
    "ResolventWeights",
    "LimitCovariance",
    "Ensemble",
    "Verdict",
    "adjoint_observable",
    "resolvent_weights",
    "projected_observable",
    "limit_field_covariance",
    "limit_form",
    "exact_covariance",
    "ensemble_covariance",
    "asymptotics_check",
    "mixing_correlation",
    "gibbs_invariance_check",
    "energy_current",
    "current_prediction",
    "write_verdicts",
    "write_curve",
]


# --- observables --------------------------------------------------------------

@dataclass
class Observable:
    """Test triple ``(f, u, v)``; ``f = (f0, f1)`` in box coefficients."""

    grid: ModeGrid
    f0: np.ndarray
    f1: np.ndarray
    u: np.ndarray
    v: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.f0 = np.asarray(self.f0, dtype=complex)
        self.f1 = np.asarray(self.f1, dtype=complex)
        if self.f0.shape != self.grid.shape or self.f1.shape != self.grid.shape:
            raise ValueError("observable field parts must live on the grid")

    @classmethod
    def zero(cls, grid: ModeGrid, name: str = "") -> "Observable":
        z = np.zeros(grid.shape, dtype=complex)
        return cls(grid, z, z.copy(), np.zeros(3), np.zeros(3), name)

    @classmethod
    def particle(cls, grid: ModeGrid, u=(0, 0, 0), v=(0, 0, 0), name: str = "") -> "Observable":
        z = np.zeros(grid.shape, dtype=complex)
        return cls(grid, z, z.copy(), u, v, name)

    @classmethod
    def bump(cls, grid: ModeGrid, center, width: float, amp0: float = 1.0, amp1: float = 0.0,
             u=(0, 0, 0), v=(0, 0, 0), name: str = "") -> "Observable":
        """Gaussian test functions ``amp exp(-|x - c|^2 / (2 width^2))`` in both slots."""
        k = grid.k
        c = np.asarray(center, dtype=float)
        g = (2 * np.pi * width ** 2) ** 1.5 * np.exp(-0.5 * width ** 2 * grid.kmag ** 2) * np.exp(1j * (k @ c))
        return cls(grid, grid.symmetrize(amp0 * g), grid.symmetrize(amp1 * g), u, v, name)

    @classmethod
    def mode(cls, grid: ModeGrid, n, part: str = "re", slot: int = 0, name: str = "") -> "Observable":
        """Observable returning ``Re`` or ``Im`` of ``phi_hat(k_n)`` (slot 0) or ``pi_hat`` (slot 1)."""
        idx = tuple(int(x) % grid.npts for x in n)
        neg = tuple((-int(x)) % grid.npts for x in n)
        f = np.zeros(grid.shape, dtype=complex)
        V = grid.volume
        if idx == neg:
            if part != "re":
                raise ValueError("self-paired modes are real")
            f[idx] = V
        elif part == "re":
            f[idx] += 0.5 * V
            f[neg] += 0.5 * V
        elif part == "im":
            f[idx] += 0.5j * V
            f[neg] -= 0.5j * V
        else:
            raise ValueError("part must be 're' or 'im'")
        z = np.zeros(grid.shape, dtype=complex)
        return cls(grid, f if slot == 0 else z, z if slot == 0 else f, np.zeros(3), np.zeros(3),
                   name or f"{part}_{'phi' if slot == 0 else 'pi'}_{tuple(n)}")

    @classmethod
    def coupling_gradient(cls, system: LatticeSystem, i: int, name: str = "") -> "Observable":
        """``<phi, grad_i rho>``: the force the field exerts on the particle."""
        z = np.zeros(system.grid.shape, dtype=complex)
        return cls(system.grid, system.grad_rho[i].copy(), z, np.zeros(3), np.zeros(3),
                   name or f"grad_rho_{i}")

    def __add__(self, other: "Observable") -> "Observable":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return Observable(self.grid, self.f0 + other.f0, self.f1 + other.f1, self.u + other.u,
                          self.v + other.v, self.name)

    def __sub__(self, other: "Observable") -> "Observable":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "Observable":
        return Observable(self.grid, c * self.f0, c * self.f1, c * self.u, c * self.v, self.name)

    __rmul__ = __mul__

    def halves(self):
        f0c, f0s = self.grid.half_of(self.f0)
        f1c, f1s = self.grid.half_of(self.f1)
        return f0c, f0s, f1c, f1s

    def value(self, Y: SystemState) -> float:
        g = self.grid
        return float(g.pairing(Y.phi_hat, self.f0) + g.pairing(Y.pi_hat, self.f1) + Y.q @ self.u + Y.p @ self.v)

    def shell_projection(self, system: LatticeSystem):
        """``P^a_{s,i} = <f^a, grad_i rho|_s>`` for both slots, shape ``(n_shells, 3)`` each."""
        f0c, _, f1c, _ = self.halves()
        return system.shell_pairing(f0c), system.shell_pairing(f1c)


def adjoint_observable(Z: Observable, system: LatticeSystem, t: float) -> Observable:
    """``S'_t Z`` with ``<Y_t, Z> = <Y_0, S'_t Z>`` for the exact box dynamics."""
    if t == 0:
        return Z
    P0, P1 = Z.shell_projection(system)
    U, V, Ca, Cb = system.reduction.adjoint_coefficients(t, Z.u, Z.v, P0, P1)
    om = system.omega
    c = np.cos(om * t)
    s = sin_over_omega(om, t)
    f0 = c * Z.f0 - om * om * s * Z.f1 + system.shell_field_full(Ca)
    f1 = s * Z.f0 + c * Z.f1 + system.shell_field_full(Cb)
    return Observable(Z.grid, f0, f1, U, V, Z.name)


# --- projected observables ----------------------------------------------------

def _simpson_weights(n: int, h: float) -> np.ndarray:
    if n < 3:
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return w
    m = n if n % 2 == 1 else n - 1
    w = np.zeros(n)
    w[:m:2] = 2.0
    w[1:m:2] = 4.0
    w[0] = w[m - 1] = 1.0
    w *= h / 3
    if m < n:
        w[m - 1] += 0.5 * h
        w[m] += 0.5 * h
    return w


@dataclass
class ResolventWeights:
    """Per-shell time integrals of the resolvent.

    ``Nc_s = int_0^T N(s) cos(w_s s) ds`` and ``Ns_s = int_0^T N(s) sin(w_s s)/w_s ds``
    give ``alpha_i(k) = grad_i rho(k) (Nc, -Ns)`` and
    ``beta_i(k) = grad_i rho(k) (w^2 Ns, Nc)`` as field pairs.
    """

    system: LatticeSystem
    horizon: float
    s: np.ndarray
    wq: np.ndarray
    n: np.ndarray
    Nc: np.ndarray
    Ns: np.ndarray
    tail_bound: float
    cos_table: np.ndarray = field(repr=False)
    sin_table: np.ndarray = field(repr=False)

    def alpha(self, i: int):
        return (self.system.shell_field_full(self._on(i, self.Nc)),
                self.system.shell_field_full(self._on(i, -self.Ns)))

    def beta(self, i: int):
        om2 = self.system.shell_omega ** 2
        return (self.system.shell_field_full(self._on(i, om2 * self.Ns)),
                self.system.shell_field_full(self._on(i, self.Nc)))

    def _on(self, i, values):
        S = np.zeros((len(values), 3))
        S[:, i] = values
        return S


def resolvent_weights(system: LatticeSystem, horizon: float | None = None, ds: float = 0.02,
                      resolvent: ResolventTable | None = None, tail_tol: float = 0.05) -> ResolventWeights:
    """Shell integrals of ``N`` up to ``horizon`` (default ``L - 8 sigma``, before box recurrences).

    ``N`` comes from the exact shell reduction unless a :class:`ResolventTable`
    is passed.  The reported ``tail_bound`` is ``env(T) T``, with ``env`` the
    oscillation envelope of ``N`` near the horizon; it raises when the
    envelope at the horizon exceeds ``tail_tol`` times its maximum.
    """
    spec, grid = system.spec, system.grid
    if horizon is None:
        horizon = grid.box_length - 8 * spec.sigma
    if resolvent is not None:
        if resolvent.horizon < horizon - 1e-9:
            raise ValueError("resolvent horizon shorter than the requested projection horizon")
        step = int(round(ds / resolvent.dt)) or 1
        ds = resolvent.dt * step
        nsteps = int(round(horizon / ds))
        s = ds * np.arange(nsteps + 1)
        n = resolvent.n[: nsteps * step + 1: step]
        ndot = resolvent.ndot[: nsteps * step + 1: step]
    else:
        nsteps = int(round(horizon / ds))
        s = ds * np.arange(nsteps + 1)
        n, ndot, _ = system.reduction.response(s)
    weff = np.sqrt(max(spec.omega0 ** 2 - system.kappa, 1e-300))
    env = np.sqrt(n ** 2 + (ndot / weff) ** 2)
    tail_env = env[-max(len(env) // 20, 1):].max()
    if tail_env > tail_tol * env.max():
        raise ValueError(f"projection horizon {horizon} too short: resolvent envelope {tail_env:.3g} "
                         f"exceeds {tail_tol} of its maximum")
    wq = _simpson_weights(len(s), ds)
    om = system.shell_omega
    ph = np.outer(s, om)
    cos_t = np.cos(ph)
    sin_t = np.sin(ph)
    Nc = cos_t.T @ (wq * n)
    safe = np.where(om > 0, om, 1.0)
    Ns = np.where(om > 0, (sin_t.T @ (wq * n)) / safe, (s * wq) @ n)
    return ResolventWeights(system, float(horizon), s, wq, n, Nc, Ns, float(tail_env * horizon), cos_t, sin_t)


@dataclass
class ProjectedObservable:
    """Field pair ``Pi(Z)`` on the grid."""

    grid: ModeGrid
    p0: np.ndarray
    p1: np.ndarray
    horizon: float
    tail_bound: float
    name: str = ""

    def halves(self):
        a, b = self.grid.half_of(self.p0)
        c, d = self.grid.half_of(self.p1)
        return a, b, c, d

    def as_observable(self) -> Observable:
        return Observable(self.grid, self.p0, self.p1, np.zeros(3), np.zeros(3), self.name)


def projected_observable(Z: Observable, weights: ResolventWeights) -> ProjectedObservable:
    """``Pi(Z) = f_* + alpha.u + beta.v``.

    ``f_* = f + sum_i int_0^T W'_{-s} alpha_i <W_s grad_i rho^0, f> ds`` with
    the scalar factor ``gamma_i(s) = <W_s grad_i rho^0, f>`` evaluated per
    shell as ``sum_s sin(w s)/w P0_s + cos(w s) P1_s``.
    """
    system = weights.system
    om = system.shell_omega
    safe = np.where(om > 0, om, 1.0)
    P0, P1 = Z.shell_projection(system)
    cos_t, sin_t, wq = weights.cos_table, weights.sin_table, weights.wq
    sinc_t = np.where(om > 0, sin_t / safe, weights.s[:, None])
    gamma = sinc_t @ P0 + cos_t @ P1                       # (n_s, 3)
    Gc = cos_t.T @ (wq[:, None] * gamma)                   # int gamma cos(w s)
    Gs = sin_t.T @ (wq[:, None] * gamma)                   # int gamma sin(w s)
    A = weights.Nc[:, None]
    B = -weights.Ns[:, None]
    S0 = A * Gc + B * om[:, None] * Gs
    S1 = np.where(om[:, None] > 0, -A * Gs / safe[:, None], 0.0) + B * Gc
    # alpha.u and beta.v
    S0 = S0 + A * Z.u[None, :] + (om ** 2 * weights.Ns)[:, None] * Z.v[None, :]
    S1 = S1 + B * Z.u[None, :] + A * Z.v[None, :]
    p0 = Z.f0 + system.shell_field_full(S0)
    p1 = Z.f1 + system.shell_field_full(S1)
    return ProjectedObservable(Z.grid, p0, p1, weights.horizon, weights.tail_bound, Z.name)


# --- limit covariance ---------------------------------------------------------

@dataclass
class LimitCovariance:
    """Per-mode 2x2 covariance ``[[q00, q01], [conj q01, q11]]`` of the limit field."""

    grid: ModeGrid
    q00: np.ndarray
    q11: np.ndarray
    q01: np.ndarray
    provenance: str = "one_temperature"

    def density(self) -> SpectralDensity:
        return tabulated_density(f"limit_{self.provenance}", self.grid, self.q00, self.q11, self.q01)

    def check_psd(self, tol: float = 1e-12) -> bool:
        scale = max(float(self.q00.max()), float(self.q11.max()), 1e-300)
        return bool(np.all(self.q00 >= -tol * scale) and np.all(self.q11 >= -tol * scale)
                    and np.all(self.q00 * self.q11 - np.abs(self.q01) ** 2 >= -tol * scale * scale))

    def form(self, a0, a1, b0, b1) -> float:
        """``L^-3 sum_k A(k)^H q(k) B(k)`` for full field pairs ``A = (a0, a1)``, ``B = (b0, b1)``."""
        val = (np.conj(a0) * (self.q00 * b0 + self.q01 * b1)
               + np.conj(a1) * (np.conj(self.q01) * b0 + self.q11 * b1))
        return float(np.real(np.sum(val)) / self.grid.volume)


def limit_field_covariance(density: SpectralDensity, grid: ModeGrid, spec) -> LimitCovariance:
    """``q_inf = (q0 + C q0 C^T) / 2`` with ``C = [[0, 1/w], [-w, 0]]``.

    For a two-temperature density the cross term
    ``q01 = i sgn(k_1) (T_+ - T_-) / (2 w)`` is filled in.
    """
    a, b, c = density.evaluate(grid)
    om = np.sqrt(grid.kmag ** 2 + spec.m ** 2)
    incl = (a != 0) | (b != 0) | (c != 0)
    if spec.m == 0 and np.any(incl & (grid.kmag == 0)):
        raise ValueError("the massless limit covariance needs the zero mode excluded")
    safe = np.where(om > 0, om, 1.0)
    q00 = np.where(incl, 0.5 * (a + b / safe ** 2), 0.0)
    q11 = np.where(incl, 0.5 * (b + om ** 2 * a), 0.0)
    q01 = np.where(incl, 1j * np.imag(c), 0.0)
    prov = "one_temperature"
    if density.kind == "two_temperature":
        dT = density.params["T_plus"] - density.params["T_minus"]
        q01 = np.where(incl, 1j * np.sign(grid.k[..., 0]) * dT / (2 * safe), 0.0)
        prov = "two_temperature"
    return LimitCovariance(grid, q00, q11, q01, prov)


def exact_covariance(system: LatticeSystem, density: SpectralDensity, Z1: Observable, Z2: Observable, t: float,
                     particle_cov=None) -> float:
    """``E[<Y_t, Z1> <Y_t, Z2>]`` for a zero-mean Gaussian field law and independent particle data.

    Computed without sampling from the adjoint observables ``S'_t Z`` and the
    initial density; ``particle_cov`` is the 6x6 covariance of ``(q0, p0)``
    (default: none).
    """
    a, b, c = density.evaluate(system.grid)
    q0 = LimitCovariance(system.grid, a, b, c)
    A = adjoint_observable(Z1, system, t)
    B = adjoint_observable(Z2, system, t)
    val = q0.form(A.f0, A.f1, B.f0, B.f1)
    if particle_cov is not None:
        C = np.asarray(particle_cov, dtype=float)
        val += float(np.concatenate([A.u, A.v]) @ C @ np.concatenate([B.u, B.v]))
    return float(val)


def limit_form(P1: ProjectedObservable, P2: ProjectedObservable, limitcov: LimitCovariance) -> float:
    """``Q_inf(Z1, Z2) = Q^B_inf(Pi(Z1), Pi(Z2))``."""
    if P1.grid != limitcov.grid or P2.grid != limitcov.grid:
        raise ValueError("grid mismatch")
    return limitcov.form(P1.p0, P1.p1, P2.p0, P2.p1)


# --- ensembles ----------------------------------------------------------------

@dataclass
class Ensemble:
    """Reproducible ensemble of initial states, generated in member chunks.

    ``kind`` is one of:

    * ``"generic"``: field from ``density``; particle from ``particle_law``
      (``"uniform"`` on ``[-particle_scale, particle_scale]``, ``"gibbs_A"``
      or ``"gibbs_eff"`` at ``T``).
    * ``"gibbs"``: coupled Gibbs state at ``T`` built in T-map variables.
    * ``"two_temperature"``: field with ``T_minus``/``T_plus`` halves.
    * ``"limit"``: the Gaussian limit law; field ``chi`` from ``limitcov``
      and ``<Y, Z> = <chi, Pi(Z)>`` using ``weights``.

    Member ``i`` draws its field from stream ``(seed, i)`` (two-temperature:
    ``(seed, 2i)``, ``(seed, 2i + 1)``) and particle data from stream 1 of
    the same member, so results do not depend on ``chunk``.
    """

    system: LatticeSystem
    kind: str
    members: int
    seed: int = 0
    chunk: int = 250
    density: SpectralDensity | None = None
    particle_law: str = "uniform"
    particle_scale: float = 1.0
    T: float = 1.0
    T_minus: float = 1.0
    T_plus: float = 2.0
    a: float = 2.0
    limitcov: LimitCovariance | None = None
    weights: ResolventWeights | None = None
    workers: int = 1

    def __post_init__(self):
        if self.kind not in ("generic", "gibbs", "two_temperature", "limit"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.members < 2:
            raise ValueError("ensembles need at least two members")
        if self.kind == "generic" and self.density is None:
            raise ValueError("generic ensembles need a density")
        if self.kind == "limit" and (self.limitcov is None or self.weights is None):
            raise ValueError("limit ensembles need limitcov and weights")

    def _particles(self, idx, law, T):
        spec = self.system.spec
        q = np.empty((len(idx), 3))
        p = np.empty((len(idx), 3))
        for j, i in enumerate(idx):
            q[j], p[j] = sample_particle(law, spec, (self.seed, i), T=T, kappa=self.system.kappa,
                                         scale=self.particle_scale, stream=1)
        return q, p

    def chunks(self):
        """Yield ``(indices, canon (m, 2, nc), selfv (m, 2, ns), q0, p0)``."""
        for start in range(0, self.members, self.chunk):
            yield self.draw(np.arange(start, min(start + self.chunk, self.members)))

    def draw(self, idx):
        """Initial data of the listed members as ``(indices, canon, selfv, q0, p0)``."""
        sys_, grid = self.system, self.system.grid
        idx = [int(i) for i in idx]
        if self.kind == "generic":
            canon, selfv = sample_half_batch(self.density, grid, self.seed, idx)
            q0, p0 = self._particles(idx, self.particle_law, self.T)
        elif self.kind == "gibbs":
            canon, selfv = sample_half_batch(gibbs_field_density(self.T, sys_.spec), grid, self.seed, idx)
            q0, p0 = self._particles(idx, "gibbs_eff", self.T)
            canon[:, 0] -= q0 @ sys_.h_half
        elif self.kind == "two_temperature":
            canon, selfv = two_temperature_half_batch(self.T_minus, self.T_plus, self.a, grid, sys_.spec,
                                                      self.seed, idx)
            q0, p0 = self._particles(idx, "gibbs_eff", 0.5 * (self.T_minus + self.T_plus))
        else:
            canon, selfv = sample_half_batch(self.limitcov.density(), grid, self.seed, idx)
            q0 = p0 = np.zeros((len(idx), 3))
        return np.array(idx), canon, selfv, q0, p0

    def _prepare(self, observables, times):
        """Per-time adjoint observables, projected for the limit ensemble, stacked as matrices."""
        mats = []
        for t in times:
            row = []
            for Z in observables:
                Zt = adjoint_observable(Z, self.system, t)
                if self.kind == "limit":
                    P = projected_observable(Zt, self.weights)
                    Zt = P.as_observable()
                row.append(Zt)
            mats.extend(row)
        F0c = np.stack([z.halves()[0] for z in mats])
        F0s = np.stack([z.halves()[1] for z in mats])
        F1c = np.stack([z.halves()[2] for z in mats])
        F1s = np.stack([z.halves()[3] for z in mats])
        U = np.stack([z.u for z in mats])
        V = np.stack([z.v for z in mats])
        return F0c, F0s, F1c, F1s, U, V

    def values(self, observables, times) -> np.ndarray:
        """``<Y_t, Z>`` for every member, time and observable: shape ``(M, n_times, n_obs)``.

        With ``workers > 1`` member chunks are spread over a fork-based
        process pool; the result is identical to the serial one.
        """
        times = list(times)
        mats = self._prepare(observables, times)
        starts = list(range(0, self.members, self.chunk))
        out = np.empty((self.members, len(times) * len(observables)))
        if self.workers > 1 and len(starts) > 1:
            global _POOL_JOB
            _POOL_JOB = (self, mats)
            try:
                ctx = multiprocessing.get_context("fork")
                with ctx.Pool(min(self.workers, len(starts))) as pool:
                    parts = pool.map(_pool_values, starts)
            finally:
                _POOL_JOB = None
            for start, part in zip(starts, parts):
                out[start:start + len(part)] = part
        else:
            for start in starts:
                part = self._chunk_values(start, mats)
                out[start:start + len(part)] = part
        return out.reshape(self.members, len(times), len(observables))

    def _chunk_values(self, start, mats):
        F0c, F0s, F1c, F1s, U, V = mats
        _, canon, selfv, q0, p0 = self.draw(np.arange(start, min(start + self.chunk, self.members)))
        val = 2.0 * np.real(canon[:, 0] @ np.conj(F0c).T + canon[:, 1] @ np.conj(F1c).T)
        val += selfv[:, 0] @ F0s.T + selfv[:, 1] @ F1s.T
        val /= self.system.grid.volume
        val += q0 @ U.T + p0 @ V.T
        return val

    def evolved_chunks(self, t: float):
        """Yield full states at time ``t`` as ``(indices, canon, selfv, q, p)`` (exact shell reduction)."""
        if self.kind == "limit":
            raise ValueError("the limit ensemble has no explicit states")
        sys_ = self.system
        red = sys_.reduction
        oh, os_ = sys_.omega_half, sys_.omega_self
        c, s = np.cos(oh * t), sin_over_omega(oh, t)
        cs, ss = np.cos(os_ * t), sin_over_omega(os_, t)
        for idx, canon, selfv, q0, p0 in self.chunks():
            a = sys_.shell_pairing(canon[:, 0])
            b = sys_.shell_pairing(canon[:, 1])
            q, p, Sphi, Spi = red.evolve(q0, p0, a, b, t)
            ph = c * canon[:, 0] + s * canon[:, 1] + sys_.shell_field(Sphi)
            pi = -oh * oh * s * canon[:, 0] + c * canon[:, 1] + sys_.shell_field(Spi)
            sph = cs * selfv[:, 0] + ss * selfv[:, 1]
            spi = -os_ * os_ * ss * selfv[:, 0] + cs * selfv[:, 1]
            yield idx, np.stack([ph, pi], axis=1), np.stack([sph, spi], axis=1), q, p


_POOL_JOB = None


def _pool_values(start):
    ens, mats = _POOL_JOB
    return ens._chunk_values(start, mats)


# --- verdicts -----------------------------------------------------------------

@dataclass
class Verdict:
    check: str
    statistic: float
    target: float
    stderr: float
    z: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"check": self.check, "statistic": self.statistic, "target": self.target, "stderr": self.stderr,
             "z": self.z, "pass": self.passed}
        d.update(self.extra)
        return d


def write_verdicts(path, verdicts, header: dict | None = None) -> None:
    payload = dict(header or {})
    payload["verdicts"] = [v.to_dict() if isinstance(v, Verdict) else v for v in verdicts]
    Path(path).write_text(json.dumps(payload, indent=2, default=float))


def write_curve(path, columns, rows, comment: str | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def ensemble_covariance(ensemble: Ensemble, Z1: Observable, Z2: Observable, t: float, centered: bool = True):
    """Sample covariance of ``<Y_t, Z1>`` and ``<Y_t, Z2>`` with a jackknife error."""
    if ensemble.members < 100:
        raise ValueError("ensemble_covariance needs at least 100 members")
    vals = ensemble.values([Z1, Z2], [t])[:, 0]
    if np.all(vals == vals[0]):
        raise ValueError("degenerate ensemble (all members identical)")
    est, se = covariance_with_se(vals[:, 0], vals[:, 1], centered=centered)
    return float(est), float(se)


def asymptotics_check(ensemble: Ensemble, Z: Observable, t_grid, weights: ResolventWeights):
    """``E|<Y_t, Z> - <W_t phi_0, Pi(Z)>|^2`` on ``t_grid`` with standard errors.

    Both terms are linear in the initial state, so each is an adjoint pairing
    with ``Y_0``; the difference observable is formed before pairing.
    """
    P = projected_observable(Z, weights).as_observable()
    system = ensemble.system
    om = system.omega
    diffs = []
    for t in t_grid:
        Zt = adjoint_observable(Z, system, t)
        c, s = np.cos(om * t), sin_over_omega(om, t)
        WtP = Observable(P.grid, c * P.f0 - om * om * s * P.f1, s * P.f0 + c * P.f1, np.zeros(3), np.zeros(3))
        diffs.append(Zt - WtP)
    vals = ensemble.values(diffs, [0.0])[:, 0]
    est, se = mean_with_se(vals ** 2)
    return np.asarray(t_grid, dtype=float), est, se


def mixing_correlation(ensemble: Ensemble, Z1: Observable, Z2: Observable, lags):
    """``E_inf[<S_t Y, Z1> <Y, Z2>]`` per lag on a limit ensemble; returns ``(lags, est, se)``."""
    if ensemble.kind != "limit":
        raise ValueError("mixing correlations are taken under the limit law")
    lags = list(lags)
    v1 = ensemble.values([Z1], lags)[:, :, 0]
    v2 = ensemble.values([Z2], [0.0])[:, 0, 0]
    est = np.empty(len(lags))
    se = np.empty(len(lags))
    for j in range(len(lags)):
        est[j], se[j] = covariance_with_se(v1[:, j], v2, centered=False)
    return np.asarray(lags, dtype=float), est, se


def _default_modes():
    return [(1, 0, 0), (0, 1, 1), (1, 1, 1), (2, 0, 0), (2, 1, 0)]


def gibbs_invariance_check(system: LatticeSystem, T: float, t_list, ensemble_size: int, seed: int = 0,
                           modes=None, chunk: int = 250, gate: float = 5.0, workers: int = 1) -> dict:
    """Moments of a coupled Gibbs ensemble at the times in ``t_list`` against ``t = 0``.

    Tracked: ``E q_i^2``, ``E p_i^2``, ``E |phi_hat(k)|^2 / L^3`` for five
    modes and the mean particle-side energy ``E[H_A + H_int]`` (the total
    energy is conserved member by member, so its mean is constant
    trivially).  Each moment at time ``t`` is compared with ``t = 0`` through
    the paired per-member difference.
    """
    grid = system.grid
    spec = system.spec
    modes = _default_modes() if modes is None else modes
    ens = Ensemble(system, "gibbs", ensemble_size, seed, chunk, T=T, workers=workers)
    obs = [Observable.particle(grid, u=e) for e in np.eye(3)] + [Observable.particle(grid, v=e) for e in np.eye(3)]
    for n in modes:
        obs += [Observable.mode(grid, n, "re"), Observable.mode(grid, n, "im")]
    obs += [Observable.coupling_gradient(system, i) for i in range(3)]
    times = [0.0] + [float(t) for t in t_list if t != 0]
    vals = ens.values(obs, times)                                    # (M, nt, nobs)
    q, p = vals[:, :, 0:3], vals[:, :, 3:6]
    nm = len(modes)
    fm = vals[:, :, 6:6 + 2 * nm]
    grad = vals[:, :, 6 + 2 * nm:9 + 2 * nm]
    moments = {}
    for i in range(3):
        moments[f"q{i}^2"] = q[:, :, i] ** 2
        moments[f"p{i}^2"] = p[:, :, i] ** 2
    for j, n in enumerate(modes):
        moments[f"|phi{tuple(n)}|^2/L^3"] = (fm[:, :, 2 * j] ** 2 + fm[:, :, 2 * j + 1] ** 2) / grid.volume
    HA = 0.5 * (np.sum(p ** 2, axis=2) + spec.omega0 ** 2 * np.sum(q ** 2, axis=2))
    Hint = -np.sum(q * grad, axis=2)
    moments["H_A+H_int"] = HA + Hint
    rows = []
    ok = True
    for name, m in moments.items():
        for j, t in enumerate(times[1:], start=1):
            d_est, d_se = mean_with_se(m[:, j] - m[:, 0])
            z = float(zscore(d_est, 0.0, d_se))
            ok &= abs(z) < gate
            rows.append({"moment": name, "t": t, "value": float(m[:, j].mean()), "value_t0": float(m[:, 0].mean()),
                         "diff": float(d_est), "stderr": float(d_se), "z": z, "pass": bool(abs(z) < gate)})
    # effective-Gibbs covariance oracle for the particle position
    target = T / (spec.omega0 ** 2 - system.kappa)
    j = len(times) - 1
    est, se = mean_with_se(q[:, j, 0] ** 2)
    zq = float(zscore(est, target, se))
    return {"passed": bool(ok and abs(zq) < gate), "rows": rows, "times": times,
            "q_variance_oracle": {"t": times[j], "value": float(est), "target": target, "stderr": float(se),
                                  "z": zq, "pass": bool(abs(zq) < gate)}}


def current_prediction(system: LatticeSystem, T_minus: float, T_plus: float) -> np.ndarray:
    """Limit current ``-(T_+ - T_-)/2 L^-3 sum_k |k_1| / w(k)`` over active modes (first component)."""
    grid = system.grid
    act = grid.active & (system.omega > 0)
    val = -(T_plus - T_minus) / 2 * np.sum(np.abs(grid.k[..., 0][act]) / system.omega[act]) / grid.volume
    return np.array([val, 0.0, 0.0])


def energy_current(ensemble: Ensemble, t: float, window: float) -> dict:
    """Bulk estimate of ``j = -E[pi grad phi]`` averaged over the slab ``|x_1| <= window`` at time ``t``.

    The slab has to stay causally isolated from the periodic seam:
    ``window + t + a < L/2``.
    """
    if ensemble.kind != "two_temperature":
        raise ValueError("energy_current expects a two-temperature ensemble")
    grid = ensemble.system.grid
    L = grid.box_length
    if not 0 < window or window + t + ensemble.a >= L / 2:
        raise ValueError(f"window {window} with t={t}, a={ensemble.a} reaches the periodic seam at L/2")
    x1 = grid.wrapped_coordinate()
    rows = np.flatnonzero(np.abs(x1) <= window + 1e-12)
    kv = np.moveaxis(grid.k, -1, 0)
    per_member = np.empty((ensemble.members, 3))
    for idx, canon, selfv, q, p in ensemble.evolved_chunks(t):
        for j, i in enumerate(idx):
            ph = grid.expand_half(canon[j, 0], selfv[j, 0])
            pi_x = np.fft.fftn(grid.expand_half(canon[j, 1], selfv[j, 1])).real[rows] / grid.volume
            for c in range(3):
                dphi = np.fft.fftn(-1j * kv[c] * ph).real[rows] / grid.volume
                per_member[i, c] = -np.mean(pi_x * dphi)
    est, se = mean_with_se(per_member)
    pred = current_prediction(ensemble.system, ensemble.T_minus, ensemble.T_plus)
    return {"estimate": est, "stderr": se, "prediction": pred, "t": t, "window": window,
            "per_member": per_member}


def kurtosis_table(values: np.ndarray):
    """Excess kurtosis with jackknife errors for each column of ``values`` (members first)."""
    out = [excess_kurtosis_with_se(values[:, j]) for j in range(values.shape[1])]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])
