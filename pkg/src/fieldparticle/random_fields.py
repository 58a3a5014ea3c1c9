"""Gaussian initial data for the field and the particle.

A translation-invariant Gaussian field on the box is specified by its
spectral density ``q_hat(k)``, a Hermitian 2x2 matrix per mode acting on
``(phi_hat, pi_hat)``.  Box coefficients are drawn with

    E[ x(k) x(k)^H ] = L^3 q_hat(k),    x = (phi_hat, pi_hat)

independently on each canonical mode (circular complex Gaussian) with the
partner ``-k`` set to the complex conjugate; the real mode ``k = 0`` gets a
real Gaussian.  Member ``i`` of an ensemble with base seed ``s`` draws from
``np.random.default_rng(SeedSequence([s, i]))``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .spectral_core import CouplingSpec, ModeGrid

__all__ = [
    "SpectralDensity",
    "FieldSample",
    "EmpiricalDensity",
    "member_rng",
    "gibbs_field_density",
    "generic_density",
    "two_temperature_density",
    "tabulated_density",
    "sample_field",
    "sample_half_batch",
    "two_temperature_sample",
    "two_temperature_half_batch",
    "smoothstep",
    "interface_cutoffs",
    "sample_particle",
    "empirical_spectral_density",
    "spatial_autocorrelation",
]

PSD_TOL = 1e-12


def member_rng(base_seed: int, index: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent generator for ensemble member ``index``.

    ``stream > 0`` selects further independent streams of the same member
    (used for particle data next to the field draw of stream 0).
    """
    key = [int(base_seed), int(index)] + ([int(stream)] if stream else [])
    return np.random.default_rng(np.random.SeedSequence(key))


@dataclass
class SpectralDensity:
    """Spectral density of a zero-mean Gaussian field pair.

    ``q00``, ``q11`` (real) and ``q01`` (complex, optional) are callables of
    the wavevector array ``k`` (trailing axis 3).  ``exclude_zero_mode``
    removes ``k = 0`` from the law (infrared regularization for the wave
    field, where ``1/omega^2`` is singular).
    """

    kind: str
    q00: Callable
    q11: Callable
    q01: Callable | None = None
    params: dict = field(default_factory=dict)
    exclude_zero_mode: bool = False

    def evaluate(self, grid: ModeGrid):
        """``(q00, q11, q01)`` arrays on the grid; inactive modes are zero."""
        k = grid.k
        act = grid.active.copy()
        if self.exclude_zero_mode:
            act &= grid.kmag > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(act, np.asarray(self.q00(k), dtype=float), 0.0)
            b = np.where(act, np.asarray(self.q11(k), dtype=float), 0.0)
            c = (np.where(act, np.asarray(self.q01(k), dtype=complex), 0.0)
                 if self.q01 is not None else np.zeros(grid.shape, dtype=complex))
        return a, b, c

    def check_psd(self, grid: ModeGrid) -> None:
        a, b, c = self.evaluate(grid)
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
        bad = (a < -PSD_TOL * scale) | (b < -PSD_TOL * scale) | (
            a * b - np.abs(c) ** 2 < -PSD_TOL * scale * scale)
        if np.any(bad):
            n = grid.integers[bad][0]
            raise ValueError(f"spectral density is not positive semidefinite at n={tuple(n)}")

    def matrix(self, grid: ModeGrid) -> np.ndarray:
        """Per-mode 2x2 matrices with shape ``grid.shape + (2, 2)``."""
        a, b, c = self.evaluate(grid)
        return np.stack([np.stack([a + 0j, c], -1), np.stack([np.conj(c), b + 0j], -1)], -2)


def gibbs_field_density(T: float, spec: CouplingSpec, include_zero_mode: bool | None = None) -> SpectralDensity:
    """Gibbs density ``q00 = T / omega^2``, ``q11 = T``, ``q01 = 0``."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    if include_zero_mode is None:
        include_zero_mode = spec.m > 0
    if spec.m == 0 and include_zero_mode:
        raise ValueError("the massless Gibbs density is singular at k = 0; exclude the zero mode")
    m2 = spec.m ** 2
    return SpectralDensity(
        "gibbs",
        lambda k: T / (np.sum(k * k, axis=-1) + m2),
        lambda k: np.full(k.shape[:-1], float(T)),
        None,
        {"T": T, "m": spec.m},
        exclude_zero_mode=not include_zero_mode,
    )


def generic_density(A: float, B: float, ell: float, spec: CouplingSpec) -> SpectralDensity:
    """Smooth non-Gibbs density ``q00 = A e^{-l^2 k^2}``, ``q11 = B omega^2 e^{-l^2 k^2}``.

    With ``A != B`` the law is not a Gibbs state, so the limit covariance
    differs from the initial one; Gaussian decay makes the position-space
    correlations decay like ``exp(-|x|^2 / (4 l^2))``.
    """
    if A < 0 or B < 0 or ell <= 0:
        raise ValueError("need A, B >= 0 and ell > 0")
    m2 = spec.m ** 2
    return SpectralDensity(
        "generic",
        lambda k: A * np.exp(-ell * ell * np.sum(k * k, axis=-1)),
        lambda k: B * (np.sum(k * k, axis=-1) + m2) * np.exp(-ell * ell * np.sum(k * k, axis=-1)),
        None,
        {"A": A, "B": B, "ell": ell, "m": spec.m},
        exclude_zero_mode=spec.m == 0,
    )


def two_temperature_density(T_minus: float, T_plus: float, a: float, spec: CouplingSpec) -> SpectralDensity:
    """Bookkeeping density of the two-temperature composite.

    The composite law is not translation invariant; the stored callables
    give the box average ``gibbs((T_- + T_+)/2)``.  The parameters drive
    :func:`two_temperature_sample` and the limit covariance.
    """
    if min(T_minus, T_plus) <= 0:
        raise ValueError("temperatures must be positive")
    base = gibbs_field_density(0.5 * (T_minus + T_plus), spec)
    return SpectralDensity("two_temperature", base.q00, base.q11, None,
                           {"T_minus": T_minus, "T_plus": T_plus, "a": a, "m": spec.m},
                           exclude_zero_mode=base.exclude_zero_mode)


def tabulated_density(kind: str, grid: ModeGrid, q00, q11, q01=None, params: dict | None = None,
                      exclude_zero_mode: bool = False) -> SpectralDensity:
    """Density given by arrays on one grid (evaluating it on another grid raises)."""
    arrays = [np.asarray(q00), np.asarray(q11), None if q01 is None else np.asarray(q01)]

    def lookup(arr):
        def f(k):
            if k.shape[:-1] != arr.shape:
                raise ValueError("tabulated density evaluated on a different grid")
            return arr
        return f

    return SpectralDensity(kind, lookup(arrays[0]), lookup(arrays[1]),
                           None if arrays[2] is None else lookup(arrays[2]), dict(params or {}),
                           exclude_zero_mode=exclude_zero_mode)


def _cholesky_factors(a, b, c):
    """Lower factor ``[[l11, 0], [l21, l22]]`` with ``L L^H = [[a, c], [conj c, b]]``."""
    a = np.maximum(a, 0.0)
    b = np.maximum(b, 0.0)
    l11 = np.sqrt(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(l11 > 0, np.conj(c) / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(b - np.abs(l21) ** 2, 0.0))
    return l11, l21, l22


@dataclass
class _HalfFactors:
    l11: np.ndarray
    l21: np.ndarray
    l22: np.ndarray
    s11: np.ndarray
    s21: np.ndarray
    s22: np.ndarray
    volume: float


def _half_factors(density: SpectralDensity, grid: ModeGrid) -> _HalfFactors:
    density.check_psd(grid)
    a, b, c = density.evaluate(grid)
    ci, si = grid.canonical_index, grid.self_index
    a, b, c = a.reshape(-1), b.reshape(-1), c.reshape(-1)
    l11, l21, l22 = _cholesky_factors(a[ci], b[ci], c[ci])
    s11, s21, s22 = _cholesky_factors(a[si], b[si], c[si].real)
    return _HalfFactors(l11, l21, l22, s11, s21.real, s22, grid.volume)


def _draw_half(f: _HalfFactors, rng: np.random.Generator):
    nc, ns = f.l11.size, f.s11.size
    z = rng.standard_normal((4, nc))
    z0 = (z[0] + 1j * z[1]) * np.sqrt(0.5)
    z1 = (z[2] + 1j * z[3]) * np.sqrt(0.5)
    zs = rng.standard_normal((2, ns))
    r = np.sqrt(f.volume)
    canon = np.stack([f.l11 * z0, f.l21 * z0 + f.l22 * z1]) * r
    selfv = np.stack([f.s11 * zs[0], f.s21 * zs[0] + f.s22 * zs[1]]) * r
    return canon, selfv


@dataclass
class FieldSample:
    """One field pair in box coefficients (exactly Hermitian)."""

    phi_hat: np.ndarray
    pi_hat: np.ndarray
    seed: int | tuple = 0
    kind: str = "generic"
    grid: ModeGrid | None = None

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``stem.npz`` (arrays) and ``stem.json`` (grid, seed, kind)."""
        stem = Path(stem)
        npz = stem.with_suffix(".npz")
        side = stem.with_suffix(".json")
        np.savez(npz, phi_hat=self.phi_hat, pi_hat=self.pi_hat)
        meta = {"seed": list(self.seed) if isinstance(self.seed, tuple) else self.seed, "kind": self.kind,
                "grid": None if self.grid is None else {"L": self.grid.box_length, "npts": self.grid.npts}}
        side.write_text(json.dumps(meta, indent=2))
        return npz, side

    @classmethod
    def load(cls, stem) -> "FieldSample":
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".json").read_text())
        arrs = np.load(stem.with_suffix(".npz"))
        grid = None if meta["grid"] is None else ModeGrid(meta["grid"]["L"], meta["grid"]["npts"])
        seed = tuple(meta["seed"]) if isinstance(meta["seed"], list) else meta["seed"]
        return cls(arrs["phi_hat"], arrs["pi_hat"], seed, meta["kind"], grid)


def _seed_parts(seed):
    if isinstance(seed, (tuple, list)):
        return int(seed[0]), int(seed[1])
    return int(seed), 0


def sample_field(density: SpectralDensity, grid: ModeGrid, seed) -> FieldSample:
    """Draw one field pair with ``E|phi_hat(k)|^2 / L^3 = q00(k)``.

    ``seed`` is an integer (member 0) or a ``(base_seed, member)`` pair.
    """
    base, idx = _seed_parts(seed)
    f = _half_factors(density, grid)
    canon, selfv = _draw_half(f, member_rng(base, idx))
    full = grid.expand_half(canon, selfv)
    return FieldSample(full[0], full[1], seed, density.kind, grid)


def sample_half_batch(density: SpectralDensity, grid: ModeGrid, base_seed: int, members) -> tuple:
    """Half-space draws for several members; identical to :func:`sample_field` member by member.

    Returns ``(canon, selfv)`` with shapes ``(M, 2, n_canonical)`` and ``(M, 2, n_self)``.
    """
    f = _half_factors(density, grid)
    members = list(members)
    canon = np.empty((len(members), 2, f.l11.size), dtype=complex)
    selfv = np.empty((len(members), 2, f.s11.size))
    for j, i in enumerate(members):
        canon[j], selfv[j] = _draw_half(f, member_rng(base_seed, i))
    return canon, selfv


# --- two-temperature composite ------------------------------------------------

def smoothstep(s):
    """Quintic smoothstep ``6 s^5 - 15 s^4 + 10 s^3`` clipped to [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def interface_cutoffs(grid: ModeGrid, a: float):
    """Cutoffs ``(zeta_minus, zeta_plus)`` on the sample coordinate ``x_1``.

    ``zeta_plus`` rises from 0 to 1 across ``|x_1| < a`` and falls back across
    the mirrored interface at ``x_1 = L/2`` (the periodic seam); ``zeta_minus
    = 1 - zeta_plus``.
    """
    L = grid.box_length
    if not 0 < 2 * a < L / 4:
        raise ValueError(f"transition half-width a={a} must satisfy 0 < 2a < L/4 = {L / 4}")
    u = np.arange(grid.npts) * grid.spacing
    d = L / 4 - np.abs(((u - L / 4 + L / 2) % L) - L / 2)
    zp = smoothstep((d + a) / (2 * a))
    return 1.0 - zp, zp


def _multiply_x1(grid, coeffs, profile):
    # multiplication by a function of x_1 only: transform along the first axis
    mixed = np.fft.fft(coeffs, axis=-3)
    mixed *= profile.reshape(-1, 1, 1)
    return np.fft.ifft(mixed, axis=-3)


def _composite(grid, zm, zp, minus_full, plus_full):
    out = _multiply_x1(grid, minus_full, zm) + _multiply_x1(grid, plus_full, zp)
    return grid.symmetrize(out)


def two_temperature_sample(T_minus: float, T_plus: float, a: float, grid: ModeGrid, seed,
                           spec: CouplingSpec, return_parts: bool = False):
    """Composite ``zeta_- phi_- + zeta_+ phi_+`` of independent Gibbs samples.

    ``phi_-`` and ``phi_+`` use the child streams ``(seed, 2 i)`` and
    ``(seed, 2 i + 1)`` of member ``i``.
    """
    if spec.m <= 0:
        raise ValueError("two-temperature sampling is defined for the Klein-Gordon field (m > 0)")
    base, idx = _seed_parts(seed)
    zm, zp = interface_cutoffs(grid, a)
    minus = sample_field(gibbs_field_density(T_minus, spec), grid, (base, 2 * idx))
    plus = sample_field(gibbs_field_density(T_plus, spec), grid, (base, 2 * idx + 1))
    stacked_m = np.stack([minus.phi_hat, minus.pi_hat])
    stacked_p = np.stack([plus.phi_hat, plus.pi_hat])
    comp = _composite(grid, zm, zp, stacked_m, stacked_p)
    out = FieldSample(comp[0], comp[1], seed, "two_temperature", grid)
    if return_parts:
        pm = grid.symmetrize(_multiply_x1(grid, stacked_m, zm))
        pp = grid.symmetrize(_multiply_x1(grid, stacked_p, zp))
        return out, FieldSample(pm[0], pm[1], seed, "part_minus", grid), FieldSample(pp[0], pp[1], seed,
                                                                                        "part_plus", grid)
    return out


def two_temperature_half_batch(T_minus, T_plus, a, grid, spec, base_seed, members):
    """Half-space two-temperature draws for several members (same streams as the single sampler)."""
    zm, zp = interface_cutoffs(grid, a)
    fm = _half_factors(gibbs_field_density(T_minus, spec), grid)
    fp = _half_factors(gibbs_field_density(T_plus, spec), grid)
    members = list(members)
    canon = np.empty((len(members), 2, fm.l11.size), dtype=complex)
    selfv = np.empty((len(members), 2, fm.s11.size))
    for j, i in enumerate(members):
        cm, sm = _draw_half(fm, member_rng(base_seed, 2 * i))
        cp, sp = _draw_half(fp, member_rng(base_seed, 2 * i + 1))
        comp = _composite(grid, zm, zp, grid.expand_half(cm, sm), grid.expand_half(cp, sp))
        canon[j], selfv[j] = grid.half_of(comp)
    return canon, selfv


# --- particle -----------------------------------------------------------------

def sample_particle(kind: str, spec: CouplingSpec, seed, T: float = 1.0, cov=None,
                    kappa: float | None = None, size: int | None = None, scale: float = 1.0,
                    stream: int = 0):
    """Particle data ``(q0, p0)``.

    ``kind="gibbs_A"``: ``cov q = T / omega0^2``, ``cov p = T``.
    ``kind="gibbs_eff"``: ``cov q = T (omega0^2 - kappa)^-1``, ``cov p = T``;
    ``kappa`` defaults to the continuum coupling constant.
    ``kind="covariance"``: 6x6 covariance ``cov`` of ``(q, p)``.
    ``kind="uniform"``: independent uniform entries on ``[-scale, scale]``
    (a non-Gaussian law, useful for Gaussianity checks of the limit).
    """
    base, idx = _seed_parts(seed)
    rng = member_rng(base, idx, stream)
    shape = (3,) if size is None else (size, 3)
    if kind in ("gibbs_A", "gibbs_eff"):
        if T < 0:
            raise ValueError("temperature must be nonnegative")
        if kind == "gibbs_A":
            vq = T / spec.omega0 ** 2
        else:
            if kappa is None:
                from .kernels import coupling_constant
                kappa = coupling_constant(spec)
            eff = spec.omega0 ** 2 - kappa
            if eff <= 0:
                raise ValueError("omega0^2 I - K_m is not positive definite; effective Gibbs law undefined")
            vq = T / eff
        z = rng.standard_normal((2,) + shape)
        return np.sqrt(vq) * z[0], np.sqrt(T) * z[1]
    if kind == "covariance":
        C = np.asarray(cov, dtype=float)
        if C.shape != (6, 6):
            raise ValueError("particle covariance must be 6x6")
        w, U = np.linalg.eigh(0.5 * (C + C.T))
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise ValueError("particle covariance is not positive semidefinite")
        A = U * np.sqrt(np.clip(w, 0, None))
        z = rng.standard_normal(shape[:-1] + (6,))
        x = z @ A.T
        return x[..., :3], x[..., 3:]
    if kind == "uniform":
        x = rng.uniform(-scale, scale, (2,) + shape)
        return x[0], x[1]
    raise ValueError(f"unknown particle law {kind!r}")


# --- estimators ---------------------------------------------------------------

@dataclass
class EmpiricalDensity:
    q00: np.ndarray
    q11: np.ndarray
    q01: np.ndarray
    se00: np.ndarray
    se11: np.ndarray
    se01: np.ndarray
    n_samples: int
    degenerate: bool


def empirical_spectral_density(samples) -> EmpiricalDensity:
    """Per-mode second moments of ``(phi_hat, pi_hat) / sqrt(L^3)`` with standard errors.

    The laws are zero-mean, so raw moments are used; the leave-one-out
    jackknife of a mean reduces to ``std / sqrt(n)``.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    vol = samples[0].grid.volume if samples[0].grid is not None else 1.0
    phi = np.stack([s.phi_hat for s in samples])
    pi = np.stack([s.pi_hat for s in samples])
    n = len(samples)
    x00 = np.abs(phi) ** 2 / vol
    x11 = np.abs(pi) ** 2 / vol
    x01 = phi * np.conj(pi) / vol
    se = lambda x: x.std(axis=0, ddof=1) / np.sqrt(n)
    se01 = se(x01.real) + 1j * se(x01.imag)
    s00, s11 = se(x00), se(x11)
    degenerate = bool(np.all(s00 == 0) and np.all(s11 == 0))
    return EmpiricalDensity(x00.mean(0), x11.mean(0), x01.mean(0), s00, s11, se01, n, degenerate)


def spatial_autocorrelation(sample: FieldSample) -> np.ndarray:
    """Box average of ``phi(x) phi(x + r)`` for every lattice separation ``r``."""
    g = sample.grid
    return g.to_real(np.abs(sample.phi_hat) ** 2) / g.volume
