"""Time-domain solvers for the particle equation with memory.

Volterra form::

    q'' = -omega0^2 q + int_0^t D(t - s) q(s) ds + F(t)

Langevin form::

    q'' = -(omega0^2 - kappa) q - int_0^t Gamma(t - s) q'(s) ds + F_eff(t)

Both are advanced with an exponential (harmonic-exact) one-step scheme: the
oscillator part is integrated exactly by variation of constants and the
remaining force ``g(t)`` (forcing plus memory) is interpolated linearly over
each step.  The memory integral is a trapezoid sum over the stored history.
Because ``D(0) = 0`` the Volterra scheme is explicit; the Langevin scheme
has a ``Gamma(0) p_{n+1}`` endpoint term and solves a scalar linear equation
per step.  The scheme is exact for ``g = 0`` and second order in ``dt``.

For box kernels, which are finite sums of sinusoids, :func:`solve_volterra_modal`
replaces the trapezoid memory sum by per-frequency accumulators integrated
exactly against the piecewise-linear position history.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import KernelTable

__all__ = [
    "ParticleTrajectory",
    "ResolventTable",
    "DecayFit",
    "step_coefficients",
    "solve_volterra",
    "solve_langevin",
    "solve_volterra_modal",
    "product_weights",
    "resolvent",
    "fit_decay",
    "decay_bound_constant",
]


@dataclass
class ParticleTrajectory:
    """Particle samples ``q_n, p_n`` at ``t_n = n dt``.

    ``q`` and ``p`` have shape ``(n + 1, 3)`` or ``(n + 1, M, 3)`` for a batch
    of ``M`` independent runs.
    """

    dt: float
    q: np.ndarray
    p: np.ndarray
    forcing_id: str = ""

    def __post_init__(self):
        if self.q.shape != self.p.shape:
            raise ValueError("q and p sample arrays must have equal shapes")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.q.shape[0])

    def to_csv(self, path, member: int = 0, header_comment: str | None = None) -> None:
        q, p = self.q, self.p
        if q.ndim == 3:
            q, p = q[:, member], p[:, member]
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["t", "qx", "qy", "qz", "px", "py", "pz"])
            for t, qq, pp in zip(self.times, q, p):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in qq] + [repr(float(x)) for x in pp])


def step_coefficients(w2: float, h: float) -> dict:
    """One-step coefficients of ``x'' = -w2 x + g`` with ``g`` linear on the step.

    With ``g(t_n + tau) = (1 - tau/h) g_n + (tau/h) g_{n+1}``::

        x_{n+1} = c x_n + s v_n + (A0 - A1) g_n + A1 g_{n+1}
        v_{n+1} = u x_n + c v_n + (B0 - B1) g_n + B1 g_{n+1}

    ``w2`` may be zero or negative (hyperbolic case).
    """
    z = w2 * h * h
    if abs(z) < 1e-6:
        # Taylor series in z keep full precision where the closed forms cancel
        c = 1 - z / 2 + z * z / 24
        s = h * (1 - z / 6 + z * z / 120)
        u = -w2 * h * (1 - z / 6 + z * z / 120)
        A0 = h * h * (0.5 - z / 24 + z * z / 720)
        A1 = h * h * (1 / 6 - z / 120 + z * z / 5040)
        B0 = s
        B1 = h * (0.5 - z / 24 + z * z / 720)
    elif w2 > 0:
        w = np.sqrt(w2)
        c, sn = np.cos(w * h), np.sin(w * h)
        s = sn / w
        u = -w * sn
        A0 = (1 - c) / w2
        A1 = (w * h - sn) / (w2 * w * h)
        B0 = s
        B1 = (1 - c) / (w2 * h)
    else:
        mu = np.sqrt(-w2)
        c, sn = np.cosh(mu * h), np.sinh(mu * h)
        s = sn / mu
        u = mu * sn
        A0 = (c - 1) / (-w2)
        A1 = (sn - mu * h) / (-w2 * mu * h)
        B0 = s
        B1 = (c - 1) / (-w2 * h)
    return dict(c=float(c), s=float(s), u=float(u), A0=float(A0), A1=float(A1), B0=float(B0), B1=float(B1))


def _forcing_array(F, times, batch_shape):
    n = len(times)
    if F is None:
        return np.zeros((n,) + batch_shape)
    if callable(F):
        arr = np.asarray(F(times), dtype=float)
    else:
        arr = np.asarray(F, dtype=float)
    if arr.shape[0] != n:
        raise ValueError(f"forcing has {arr.shape[0]} samples, solver grid has {n}")
    arr = np.broadcast_to(arr, (n,) + batch_shape) if arr.shape[1:] != batch_shape else arr
    if not np.all(np.isfinite(arr)):
        raise ValueError("forcing contains NaN or infinite values")
    return arr


def _prepare(table, dt, T, q0, p0):
    if not table.isotropy_flag:
        raise NotImplementedError("solvers support isotropic kernel tables only")
    if T > table.horizon * (1 + 1e-12) + 1e-12:
        raise ValueError(f"horizon T={T} exceeds kernel table horizon {table.horizon}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    tab = table if abs(table.dt - dt) < 1e-15 and len(table.d) == n + 1 else table.resampled(dt, n * dt)
    q0 = np.asarray(q0, dtype=float)
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), q0.shape)
    if q0.shape[-1] != 3:
        raise ValueError("particle states must have a trailing axis of length 3")
    return tab, n, q0, p0


def _omega0(table, omega0):
    if omega0 is None:
        try:
            omega0 = table.meta["omega0"]
        except KeyError:
            raise ValueError("omega0 not given and not recorded in the kernel table") from None
    return float(omega0)


def solve_volterra(table: KernelTable, F, q0, p0, dt: float, T: float, omega0: float | None = None,
                   forcing_id: str = "") -> ParticleTrajectory:
    """Solve ``q'' = -omega0^2 q + int_0^t D(t-s) q(s) ds + F(t)``.

    Parameters
    ----------
    table : KernelTable
        Kernel samples; resampled to ``dt`` if needed (see ``KernelTable.resampled``).
    F : callable, array or None
        Forcing.  A callable receives the time grid and returns ``(n+1, 3)``
        or ``(n+1, M, 3)``; arrays must already be sampled on the grid.
    q0, p0 : array_like
        Initial data of shape ``(3,)`` or ``(M, 3)``.
    """
    tab, n, q0, p0 = _prepare(table, dt, T, q0, p0)
    w0 = _omega0(tab, omega0)
    times = dt * np.arange(n + 1)
    Fa = _forcing_array(F, times, q0.shape)
    cf = step_coefficients(w0 * w0, dt)
    c, s, u, A0, A1, B0, B1 = (cf[k] for k in ("c", "s", "u", "A0", "A1", "B0", "B1"))
    d = tab.d
    shape = q0.shape
    Q = np.empty((n + 1,) + shape)
    P = np.empty((n + 1,) + shape)
    Qf = Q.reshape(n + 1, -1)
    Q[0], P[0] = q0, p0
    g = Fa[0].copy()
    for j in range(n):
        # memory at t_{j+1}; the endpoint term carries D(0) = 0
        mem = 0.5 * d[j + 1] * Qf[0]
        if j >= 1:
            mem = mem + d[j:0:-1] @ Qf[1:j + 1]
        g_next = Fa[j + 1] + dt * mem.reshape(shape)
        Q[j + 1] = c * Q[j] + s * P[j] + (A0 - A1) * g + A1 * g_next
        P[j + 1] = u * Q[j] + c * P[j] + (B0 - B1) * g + B1 * g_next
        g = g_next
    return ParticleTrajectory(dt, Q, P, forcing_id)


def solve_langevin(table: KernelTable, Feff, q0, p0, dt: float, T: float, omega0: float | None = None,
                   forcing_id: str = "") -> ParticleTrajectory:
    """Solve ``q'' = -(omega0^2 I - K_m) q - int_0^t Gamma(t-s) q'(s) ds + F_eff(t)``."""
    tab, n, q0, p0 = _prepare(table, dt, T, q0, p0)
    w0 = _omega0(tab, omega0)
    times = dt * np.arange(n + 1)
    Fa = _forcing_array(Feff, times, q0.shape)
    cf = step_coefficients(w0 * w0 - tab.kappa, dt)
    c, s, u, A0, A1, B0, B1 = (cf[k] for k in ("c", "s", "u", "A0", "A1", "B0", "B1"))
    gm = tab.gamma
    shape = q0.shape
    Q = np.empty((n + 1,) + shape)
    P = np.empty((n + 1,) + shape)
    Pf = P.reshape(n + 1, -1)
    Q[0], P[0] = q0, p0
    g = Fa[0].copy()
    denom = 1.0 + 0.5 * dt * gm[0] * B1
    for j in range(n):
        hist = 0.5 * gm[j + 1] * Pf[0]
        if j >= 1:
            hist = hist + gm[j:0:-1] @ Pf[1:j + 1]
        known = Fa[j + 1] - dt * hist.reshape(shape)
        P[j + 1] = (u * Q[j] + c * P[j] + (B0 - B1) * g + B1 * known) / denom
        g_next = known - 0.5 * dt * gm[0] * P[j + 1]
        Q[j + 1] = c * Q[j] + s * P[j] + (A0 - A1) * g + A1 * g_next
        g = g_next
    return ParticleTrajectory(dt, Q, P, forcing_id)


def product_weights(omega, h):
    """Exact weights of ``int_0^h exp(i w (h - tau)) x(tau) dtau`` for ``x`` linear on the step.

    Returns ``(alpha, beta)`` with the integral equal to
    ``alpha * x(0) + beta * x(h)``.  Power series are used for ``|w h| < 0.5``.
    """
    omega = np.asarray(omega, dtype=float)
    z = omega * h
    E0 = np.empty(omega.shape, dtype=complex)
    E1 = np.empty(omega.shape, dtype=complex)
    small = np.abs(z) < 0.5
    iz = 1j * z[small]
    term = np.ones_like(iz)
    s0 = np.zeros_like(iz)
    s1 = np.zeros_like(iz)
    for k in range(18):
        s0 += term / (k + 1)
        s1 += term / (k + 2)
        term = term * iz / (k + 1)
    E0[small] = h * s0
    E1[small] = h * h * s1
    wl = omega[~small]
    e = np.exp(1j * wl * h)
    E0[~small] = (e - 1) / (1j * wl)
    E1[~small] = h * e / (1j * wl) - E0[~small] / (1j * wl)
    return E1 / h, E0 - E1 / h


def solve_volterra_modal(omega_s, weight_s, F, q0, p0, dt: float, T: float, omega0: float,
                         record=(), forcing_id: str = ""):
    """Volterra solver for kernels that are finite sums ``D(t) = sum_s W_s sin(w_s t)/w_s``.

    The memory is carried by the accumulators
    ``Z_s(t) = int_0^t exp(i w_s (t - tau)) q(tau) dtau``, updated with the
    exact integral of ``exp(i w (t - tau))`` against the piecewise-linear
    interpolant of ``q`` (product trapezoid rule).  Together with the linear
    interpolation of the force in the exponential step this integrates the
    particle plus its field modes consistently, so energy is conserved far
    better than with the plain trapezoid memory sum.

    Returns
    -------
    traj : ParticleTrajectory
    Z : dict
        Accumulators at the requested ``record`` step indices, each of shape
        ``(n_shells,) + q0.shape``.
    """
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    om = np.asarray(omega_s, dtype=float)
    W = np.asarray(weight_s, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), q0.shape)
    shape = q0.shape
    times = dt * np.arange(n + 1)
    Fa = _forcing_array(F, times, shape)
    alpha, beta = product_weights(om, dt)
    rot = np.exp(1j * om * dt)
    winv = np.where(om > 0, W / np.where(om > 0, om, 1.0), 0.0)
    bsc = float(np.sum(winv * beta.imag))
    cf = step_coefficients(omega0 * omega0, dt)
    c, s, u, A0, A1, B0, B1 = (cf[k] for k in ("c", "s", "u", "A0", "A1", "B0", "B1"))
    denom = 1.0 - A1 * bsc
    ext = (slice(None),) + (None,) * len(shape)
    rot, alpha, beta = rot[ext], alpha[ext], beta[ext]
    Z = np.zeros((len(om),) + shape, dtype=complex)
    Q = np.empty((n + 1,) + shape)
    P = np.empty((n + 1,) + shape)
    Q[0], P[0] = q0, p0
    rec = set(int(r) for r in record)
    out = {0: Z.copy()} if 0 in rec else {}
    g = Fa[0].copy()
    for j in range(n):
        Zp = rot * Z + alpha * Q[j]
        known = Fa[j + 1] + np.tensordot(winv, Zp.imag, axes=(0, 0))
        Q[j + 1] = (c * Q[j] + s * P[j] + (A0 - A1) * g + A1 * known) / denom
        g_next = known + bsc * Q[j + 1]
        P[j + 1] = u * Q[j] + c * P[j] + (B0 - B1) * g + B1 * g_next
        Z = Zp + beta * Q[j + 1]
        g = g_next
        if j + 1 in rec:
            out[j + 1] = Z.copy()
    return ParticleTrajectory(dt, Q, P, forcing_id), out


@dataclass
class ResolventTable:
    """Principal solution of the homogeneous particle equation.

    ``q_t = Ndot(t) q0 + N(t) p0`` and ``p_t = Nddot(t) q0 + Ndot(t) p0``.
    Isotropic kernels give ``N(t) = n(t) I``; the scalars are stored.
    ``ndot_check`` is the velocity of the ``(0, e_i)`` solution, which must
    agree with ``ndot`` up to discretization error.
    """

    dt: float
    n: np.ndarray
    ndot: np.ndarray
    nddot: np.ndarray
    ndot_check: np.ndarray
    omega_eff: float

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.n))

    @property
    def horizon(self) -> float:
        return self.dt * (len(self.n) - 1)

    @property
    def N_samples(self) -> np.ndarray:
        return self.n[:, None, None] * np.eye(3)

    @property
    def Ndot_samples(self) -> np.ndarray:
        return self.ndot[:, None, None] * np.eye(3)

    @property
    def Nddot_samples(self) -> np.ndarray:
        return self.nddot[:, None, None] * np.eye(3)

    def V(self, i: int) -> np.ndarray:
        """6x6 block matrix ``[[Ndot, N], [Nddot, Ndot]]`` at sample ``i``."""
        I = np.eye(3)
        return np.block([[self.ndot[i] * I, self.n[i] * I], [self.nddot[i] * I, self.ndot[i] * I]])

    def apply(self, q0, p0):
        """Homogeneous trajectory ``(q_t, p_t)`` for initial data ``(q0, p0)``."""
        q0 = np.asarray(q0, dtype=float)
        p0 = np.asarray(p0, dtype=float)
        q = self.ndot[:, None] * q0 + self.n[:, None] * p0
        p = self.nddot[:, None] * q0 + self.ndot[:, None] * p0
        return q, p

    def norm_N(self) -> np.ndarray:
        return np.sqrt(3.0) * np.abs(self.n)

    def norm_Ndot(self) -> np.ndarray:
        return np.sqrt(3.0) * np.abs(self.ndot)

    def envelope(self) -> np.ndarray:
        """``sqrt(|Ndot|^2 + omega_eff^2 |N|^2)``, a smooth majorant of the oscillating ``|N|``.

        ``omega_eff^2 = omega0^2 - kappa`` is the frequency of the effective
        potential; the combination removes most of the phase oscillation of
        the damped resonance so log-fits are not dominated by zeros of ``N``.
        """
        return np.sqrt(3.0) * np.sqrt(self.ndot ** 2 + self.omega_eff ** 2 * self.n ** 2) / self.omega_eff

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["t", "normN", "normNdot", "envelope"])
            for row in zip(self.times, self.norm_N(), self.norm_Ndot(), self.envelope()):
                w.writerow([repr(float(x)) for x in row])


def resolvent(table: KernelTable, dt: float, T: float, omega0: float | None = None) -> ResolventTable:
    """Resolvent columns from canonical initial data ``(e_i, 0)`` and ``(0, e_i)``."""
    w0 = _omega0(table, omega0)
    q0 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    p0 = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    tr = solve_volterra(table, None, q0, p0, dt, T, w0, forcing_id="resolvent")
    weff2 = w0 * w0 - table.kappa
    weff = np.sqrt(weff2) if weff2 > 0 else w0
    return ResolventTable(dt, tr.q[:, 1, 0].copy(), tr.q[:, 0, 0].copy(), tr.p[:, 0, 0].copy(),
                          tr.p[:, 1, 0].copy(), float(weff))


@dataclass
class DecayFit:
    model: str
    slope: float
    intercept: float
    r_squared: float
    n_samples: int

    @property
    def rate(self) -> float:
        """Exponential rate ``-slope`` (exponential model)."""
        return -self.slope

    @property
    def exponent(self) -> float:
        """Power-law exponent (power model)."""
        return self.slope

    def to_dict(self) -> dict:
        return {"model": self.model, "slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "n_samples": self.n_samples}


def fit_decay(data, window, model: str = "power", values=None) -> DecayFit:
    """Least-squares decay fit on ``window = (t1, t2)``.

    ``data`` is a :class:`ResolventTable` (its :meth:`~ResolventTable.envelope`
    is fitted) or an array of times with ``values`` given separately.  The
    exponential model regresses ``log v`` on ``t``; the power model regresses
    ``log v`` on ``log(1 + t)``, matching bounds of the form ``(1 + t)^-a``.
    Values are floored at 1e-300 before taking logs.
    """
    if isinstance(data, ResolventTable):
        t, v = data.times, data.envelope()
    else:
        t = np.asarray(data, dtype=float)
        v = np.asarray(values, dtype=float)
    t1, t2 = window
    if t1 < t[0] - 1e-12 or t2 > t[-1] + 1e-9:
        raise ValueError(f"window {window} is outside the sampled range [{t[0]}, {t[-1]}]")
    sel = (t >= t1 - 1e-12) & (t <= t2 + 1e-12)
    if sel.sum() < 10:
        raise ValueError("degenerate fit window: fewer than 10 samples")
    y = np.log(np.maximum(np.abs(v[sel]), 1e-300))
    if model == "exponential":
        x = t[sel]
    elif model == "power":
        x = np.log1p(t[sel])
    else:
        raise ValueError(f"unknown decay model {model!r}")
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return DecayFit(model, float(slope), float(icpt), float(r2), int(sel.sum()))


def decay_bound_constant(t, values, eps) -> float:
    """Smallest ``C`` with ``values <= C eps(t)`` on the samples."""
    t = np.asarray(t, dtype=float)
    return float(np.max(np.abs(values) / eps(t)))
