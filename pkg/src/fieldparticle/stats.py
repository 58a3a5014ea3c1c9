"""Jackknife error bars for ensemble moments."""
from __future__ import annotations

import numpy as np

__all__ = ["jackknife_moments", "mean_with_se", "covariance_with_se", "excess_kurtosis_with_se", "zscore"]


def jackknife_moments(moments: np.ndarray, statistic, n_blocks: int | None = None):
    """Jackknife for a smooth function of sample moments.

    Parameters
    ----------
    moments : ndarray, shape (n, n_moments, ...)
        Per-member moment contributions (e.g. ``x``, ``y``, ``x*y``).
    statistic : callable
        ``statistic(m0, m1, ...)`` receives the averaged moments, each with the
        trailing shape ``...`` (possibly with an extra leading replicate axis),
        and returns the estimate.
    n_blocks : int, optional
        Number of contiguous delete-blocks.  Defaults to leave-one-out.

    Returns
    -------
    value, stderr : ndarray
    """
    x = np.asarray(moments, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("jackknife needs at least two samples")
    nmom = x.shape[1]

    def call(mu):
        ax = mu.ndim - (x.ndim - 2) - 1
        return statistic(*(np.take(mu, i, axis=ax) for i in range(nmom)))

    total = x.sum(axis=0)
    value = call(total / n)
    nb = n if n_blocks is None else int(min(max(n_blocks, 2), n))
    if nb == n:
        reps = call((total[None] - x) / (n - 1))
    else:
        edges = np.linspace(0, n, nb + 1).astype(int)
        sums = np.add.reduceat(x, edges[:-1], axis=0)
        sizes = np.diff(edges).reshape((-1,) + (1,) * (x.ndim - 1))
        reps = call((total[None] - sums) / (n - sizes))
    var = (nb - 1) / nb * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0)
    return value, np.sqrt(var)


def mean_with_se(x, axis: int = 0):
    """Sample mean and its standard error (the leave-one-out jackknife of a mean)."""
    x = np.asarray(x, dtype=float)
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / np.sqrt(x.shape[axis])


def covariance_with_se(x, y, centered: bool = True, n_blocks: int | None = None):
    """Covariance of paired samples ``x``, ``y`` (leading member axis) with jackknife error.

    With ``centered=False`` the raw moment ``E[x y]`` is estimated, which is
    the covariance for laws known to have zero mean.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if centered:
        mom = np.stack([x, y, x * y], axis=1)
        return jackknife_moments(mom, lambda a, b, ab: ab - a * b, n_blocks)
    mom = (x * y)[:, None]
    return jackknife_moments(mom, lambda ab: ab, n_blocks)


def excess_kurtosis_with_se(x, n_blocks: int | None = None):
    """Excess kurtosis ``m4 / m2^2 - 3`` from central moments, with jackknife error."""
    x = np.asarray(x, dtype=float)
    mom = np.stack([x, x ** 2, x ** 3, x ** 4], axis=1)

    def kurt(m1, m2, m3, m4):
        c2 = m2 - m1 ** 2
        c4 = m4 - 4 * m3 * m1 + 6 * m2 * m1 ** 2 - 3 * m1 ** 4
        return c4 / c2 ** 2 - 3.0

    return jackknife_moments(mom, kurt, n_blocks)


def zscore(value, target, stderr):
    """``(value - target) / stderr`` with a zero error bar mapped to 0 or inf."""
    value = np.asarray(value, dtype=float)
    diff = value - target
    stderr = np.asarray(stderr, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, diff / np.where(stderr > 0, stderr, 1.0),
                     np.where(np.abs(diff) > 0, np.inf, 0.0))
    return z
