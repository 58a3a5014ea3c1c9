"""Single-mode algebra for the free wave / Klein-Gordon field and the coupling.

Fourier convention used throughout the package::

    rho_hat(k) = int exp(+i k.x) rho(x) dx

On the periodic box of side ``L`` a field is stored through its box
coefficients ``phi_hat(k) = int_box exp(+i k.x) phi(x) dx`` so that

    phi(x) = L**-3 * sum_k phi_hat(k) exp(-i k.x)
    <phi, psi> = L**-3 * sum_k phi_hat(k) conj(psi_hat(k))

and a gradient acts as multiplication by ``-i k``.  Riemann sums
``L**-3 sum_k`` approximate ``(2 pi)**-3 int dk``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "CouplingSpec",
    "ModeGrid",
    "dispersion",
    "propagator_matrix",
    "adjoint_propagator",
    "commutation_matrix",
    "coupling_fourier",
    "coupling_profile",
    "sin_over_omega",
]

_SHAPES = ("gaussian", "radial_bump")


@dataclass(frozen=True)
class CouplingSpec:
    """Coupling function, particle frequency and field mass.

    ``shape="gaussian"`` is ``rho(x) = g exp(-|x|^2 / (2 sigma^2))``;
    ``shape="radial_bump"`` is ``rho(x) = g exp(1 - 1/(1 - |x/sigma|^2))``
    inside ``|x| < sigma`` and zero outside.  ``m == 0`` is the wave field
    (WF), ``m > 0`` the Klein-Gordon field (KGF).
    """

    g: float = 0.5
    sigma: float = 1.0
    m: float = 0.0
    omega0: float = 1.5
    shape: str = "gaussian"

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown coupling shape {self.shape!r}; expected one of {_SHAPES}")
        if self.g < 0:
            raise ValueError("coupling amplitude g must be nonnegative")
        if self.sigma <= 0:
            raise ValueError("coupling width sigma must be positive")
        if self.m < 0:
            raise ValueError("field mass m must be nonnegative")
        if self.omega0 <= 0:
            raise ValueError("oscillator frequency omega0 must be positive")

    @property
    def field_kind(self) -> str:
        return "KGF" if self.m > 0 else "WF"

    def scaled(self, factor: float) -> "CouplingSpec":
        """Same spec with the coupling amplitude multiplied by ``factor``."""
        return CouplingSpec(self.g * factor, self.sigma, self.m, self.omega0, self.shape)

    def replace(self, **changes) -> "CouplingSpec":
        fields = dict(g=self.g, sigma=self.sigma, m=self.m, omega0=self.omega0, shape=self.shape)
        fields.update(changes)
        return CouplingSpec(**fields)


def _as_kvec(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape[-1:] != (3,):
        raise ValueError("wavevectors must have a trailing axis of length 3")
    return k


def dispersion(k, m: float) -> np.ndarray:
    """Frequency ``sqrt(|k|^2 + m^2)`` of a free mode with wavevector ``k``."""
    if m < 0:
        raise ValueError("mass must be nonnegative")
    k = _as_kvec(k)
    return np.sqrt(np.sum(k * k, axis=-1) + m * m)


def sin_over_omega(omega, t):
    """``sin(omega t) / omega`` with the ``omega -> 0`` limit ``t``."""
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(t, dtype=float)
    return t * np.sinc(omega * t / np.pi)


def _matrix(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], axis=-1), np.stack([c, d], axis=-1)], axis=-2)


def propagator_matrix(k, t, m: float) -> np.ndarray:
    """Free propagator ``G_t(k)`` acting on ``(phi_hat, pi_hat)``.

    Returns ``[[cos wt, sin(wt)/w], [-w sin wt, cos wt]]`` with shape
    ``broadcast(k[..., 0], t) + (2, 2)``.  At ``w = 0`` this is the limit
    ``[[1, t], [0, 1]]``.
    """
    w = dispersion(k, m)
    wt = w * np.asarray(t, dtype=float)
    c = np.cos(wt)
    return _matrix(c, sin_over_omega(w, t), -w * np.sin(wt), c)


def adjoint_propagator(k, t, m: float) -> np.ndarray:
    """Adjoint of :func:`propagator_matrix` for the pairing ``<phi, f>``.

    ``[[cos wt, -w sin wt], [sin(wt)/w, cos wt]]``, the plain transpose, since
    the pairing of field pairs is the unweighted sum of component products.
    """
    w = dispersion(k, m)
    wt = w * np.asarray(t, dtype=float)
    c = np.cos(wt)
    return _matrix(c, -w * np.sin(wt), sin_over_omega(w, t), c)


def commutation_matrix(k, m: float) -> np.ndarray:
    """``C(k) = [[0, 1/w], [-w, 0]]``; undefined for the massless zero mode."""
    w = dispersion(k, m)
    if np.any(w == 0):
        raise ValueError("commutation matrix is undefined at omega(k) = 0 (WF zero mode); exclude k = 0")
    zero = np.zeros_like(w)
    return _matrix(zero, 1.0 / w, -w, zero)


# Gauss-Legendre rule on [0, 1] used for the radial transform of the bump.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(1024)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def coupling_profile(spec: CouplingSpec, r) -> np.ndarray:
    """Position-space coupling ``rho`` at radius ``r``."""
    r = np.asarray(r, dtype=float)
    s = r / spec.sigma
    if spec.shape == "gaussian":
        return spec.g * np.exp(-0.5 * s * s)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = spec.g * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_transform(spec: CouplingSpec, kmag: np.ndarray) -> np.ndarray:
    r = spec.sigma * _GL_X
    prof = coupling_profile(spec, r) * r * r * spec.sigma * _GL_W
    flat = kmag.reshape(-1)
    out = np.empty_like(flat)
    for start in range(0, flat.size, 4096):
        kr = np.outer(flat[start:start + 4096], r)
        out[start:start + 4096] = 4.0 * np.pi * (np.sinc(kr / np.pi) @ prof)
    return out.reshape(kmag.shape)


def coupling_fourier(spec: CouplingSpec, k) -> np.ndarray:
    """Fourier transform ``rho_hat(k) = int exp(i k.x) rho(x) dx``.

    Takes wavevectors with a trailing axis of 3; radial magnitudes go through
    :func:`coupling_fourier_radial`.  For the Gaussian shape,
    ``rho_hat(k) = g (2 pi)^{3/2} sigma^3 exp(-sigma^2 |k|^2 / 2)``.
    """
    kmag = np.sqrt(np.sum(_as_kvec(k) ** 2, axis=-1))
    return coupling_fourier_radial(spec, kmag)


@lru_cache(maxsize=32)
def _bump_spline(sigma: float) -> CubicSpline:
    # unit-amplitude transform tabulated once per width; the spline error
    # at this spacing is far below the radial quadrature tolerance
    kk = np.linspace(0.0, _BUMP_KMAX / sigma, 120001)
    return CubicSpline(kk, _bump_transform(CouplingSpec(1.0, sigma, shape="radial_bump"), kk))


_BUMP_KMAX = 320.0


def coupling_fourier_radial(spec: CouplingSpec, kmag) -> np.ndarray:
    """``rho_hat`` as a function of ``|k|``."""
    kmag = np.abs(np.asarray(kmag, dtype=float))
    if spec.shape == "gaussian":
        s = spec.sigma
        return spec.g * (2.0 * np.pi) ** 1.5 * s ** 3 * np.exp(-0.5 * (s * kmag) ** 2)
    if spec.g == 0:
        return np.zeros_like(kmag)
    inside = kmag <= _BUMP_KMAX / spec.sigma
    out = np.empty_like(kmag)
    out[inside] = spec.g * _bump_spline(spec.sigma)(kmag[inside])
    if not np.all(inside):
        out[~inside] = _bump_transform(spec, kmag[~inside])
    return out


__all__.append("coupling_fourier_radial")


class ModeGrid:
    """Fourier lattice ``k = 2 pi n / L`` of a periodic box, ``n in [-N/2, N/2)^3``.

    Arrays are laid out in FFT order (index ``j`` holds ``n = fftfreq(N) * N``).
    Modes with a component on the Nyquist plane ``n_i = -N/2`` have no
    partner ``-k`` inside the lattice; they are marked inactive and carry no
    field degrees of freedom.
    """

    def __init__(self, box_length: float, points_per_axis: int):
        if points_per_axis <= 0 or points_per_axis % 2:
            raise ValueError("points_per_axis must be an even positive integer")
        if box_length <= 0:
            raise ValueError("box_length must be positive")
        self.box_length = float(box_length)
        self.npts = int(points_per_axis)

    def __repr__(self):
        return f"ModeGrid(box_length={self.box_length}, points_per_axis={self.npts})"

    def __eq__(self, other):
        return isinstance(other, ModeGrid) and (other.box_length, other.npts) == (self.box_length, self.npts)

    def __hash__(self):
        return hash((self.box_length, self.npts))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.npts,) * 3

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    @property
    def spacing(self) -> float:
        return self.box_length / self.npts

    @property
    def mode_volume(self) -> float:
        """Volume element ``(2 pi / L)^3`` of the k lattice."""
        return (2.0 * np.pi / self.box_length) ** 3

    @cached_property
    def integers(self) -> np.ndarray:
        n1 = np.rint(np.fft.fftfreq(self.npts) * self.npts).astype(int)
        n = np.stack(np.meshgrid(n1, n1, n1, indexing="ij"), axis=-1)
        return n

    @cached_property
    def k(self) -> np.ndarray:
        return (2.0 * np.pi / self.box_length) * self.integers

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(np.sum(self.k ** 2, axis=-1))

    @cached_property
    def active(self) -> np.ndarray:
        return np.all(self.integers != -self.npts // 2, axis=-1)

    @cached_property
    def partner(self) -> np.ndarray:
        """Flat index of the mode ``-k`` for every mode (modular negation)."""
        idx = np.arange(self.npts)
        neg = (-idx) % self.npts
        n = self.npts
        i, j, l = np.meshgrid(neg, neg, neg, indexing="ij")
        return (i * n * n + j * n + l).reshape(-1)

    @cached_property
    def self_paired(self) -> np.ndarray:
        return (self.partner == np.arange(self.npts ** 3)).reshape(self.shape)

    @cached_property
    def canonical(self) -> np.ndarray:
        """Active modes chosen as representatives of the pairs ``{k, -k}``."""
        n = self.integers
        first = (n[..., 0] > 0) | ((n[..., 0] == 0) & (n[..., 1] > 0)) | (
            (n[..., 0] == 0) & (n[..., 1] == 0) & (n[..., 2] > 0))
        return first & self.active

    @cached_property
    def _shells(self):
        n2 = np.sum(self.integers ** 2, axis=-1)
        out = np.full(self.shape, -1, dtype=np.int64)
        values, inverse = np.unique(n2[self.active], return_inverse=True)
        out[self.active] = inverse
        return out, values

    @property
    def shell_index(self) -> np.ndarray:
        """Index of the ``|n|^2`` shell of every mode (``-1`` when inactive)."""
        return self._shells[0]

    @property
    def shell_kmag(self) -> np.ndarray:
        return (2.0 * np.pi / self.box_length) * np.sqrt(self._shells[1])

    @property
    def n_shells(self) -> int:
        return len(self.shell_kmag)

    def positions(self) -> np.ndarray:
        """Real-space sample points ``x_j = j L / N`` (shape ``(N, N, N, 3)``)."""
        x1 = np.arange(self.npts) * self.spacing
        return np.stack(np.meshgrid(x1, x1, x1, indexing="ij"), axis=-1)

    def wrapped_coordinate(self) -> np.ndarray:
        """Sample coordinates on an axis wrapped into ``[-L/2, L/2)``."""
        x1 = np.arange(self.npts) * self.spacing
        return (x1 + 0.5 * self.box_length) % self.box_length - 0.5 * self.box_length

    def to_real(self, coeffs: np.ndarray) -> np.ndarray:
        """Real-space samples from box coefficients (last three axes)."""
        return np.fft.fftn(coeffs, axes=(-3, -2, -1)).real / self.volume

    def to_fourier(self, values: np.ndarray) -> np.ndarray:
        """Box coefficients from real-space samples (last three axes)."""
        out = np.fft.ifftn(values, axes=(-3, -2, -1)) * self.volume
        return self.symmetrize(out)

    def symmetrize(self, coeffs: np.ndarray) -> np.ndarray:
        """Enforce exact Hermitian symmetry and zero the inactive modes.

        Values on canonical modes are kept; their partners receive the exact
        complex conjugate and self-paired active modes are made real.
        """
        shape = coeffs.shape
        flat = coeffs.reshape(shape[:-3] + (-1,)).astype(complex, copy=True)
        canon = self.canonical.reshape(-1)
        partners = self.partner[canon]
        flat[..., partners] = np.conj(flat[..., canon])
        sp = self.self_paired.reshape(-1) & self.active.reshape(-1)
        flat[..., sp] = flat[..., sp].real
        flat[..., ~self.active.reshape(-1)] = 0.0
        return flat.reshape(shape)

    def pairing(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``L^-3 sum_k a(k) conj(b(k))`` over the last three axes (real part)."""
        return np.real(np.sum(a * np.conj(b), axis=(-3, -2, -1))) / self.volume

    def is_hermitian(self, coeffs: np.ndarray) -> bool:
        flat = coeffs.reshape(coeffs.shape[:-3] + (-1,))
        return bool(np.array_equal(flat[..., self.partner], np.conj(flat)))

    # --- half-space representation -------------------------------------
    # Real fields are determined by their values on the canonical modes plus
    # the (real) self-paired active modes; ensembles are stored that way.

    @cached_property
    def canonical_index(self) -> np.ndarray:
        return np.flatnonzero(self.canonical)

    @cached_property
    def self_index(self) -> np.ndarray:
        return np.flatnonzero(self.self_paired & self.active)

    def half_of(self, coeffs: np.ndarray):
        """``(canonical values, self-paired values)`` of full coefficient arrays."""
        flat = coeffs.reshape(coeffs.shape[:-3] + (-1,))
        return flat[..., self.canonical_index], flat[..., self.self_index].real

    def expand_half(self, canon: np.ndarray, selfv: np.ndarray) -> np.ndarray:
        """Full Hermitian coefficient arrays from half-space values."""
        lead = canon.shape[:-1]
        flat = np.zeros(lead + (self.npts ** 3,), dtype=complex)
        flat[..., self.canonical_index] = canon
        flat[..., self.partner[self.canonical_index]] = np.conj(canon)
        flat[..., self.self_index] = selfv
        return flat.reshape(lead + self.shape)

    def half_pairing(self, a_canon, a_self, b_canon, b_self) -> np.ndarray:
        """``<a, b>`` from half-space values (equal to :meth:`pairing` of the full arrays)."""
        return (2.0 * np.real(np.sum(a_canon * np.conj(b_canon), axis=-1))
                + np.sum(a_self * b_self, axis=-1)) / self.volume
