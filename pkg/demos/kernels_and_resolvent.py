"""
Memory kernels and the particle resolvent
=========================================

The field acts on the particle only through two scalar kernels: the
dissipation kernel ``d(t)`` and its antiderivative ``gamma(t)``.  This script
tabulates both for the two standard couplings, checks the massless Gaussian
case against its closed form, and then looks at how the particle resolvent
decays once the memory is switched on.

Run with ``python demos/kernels_and_resolvent.py``.
"""
import numpy as np

from fieldparticle import CouplingSpec, build_kernel_table, coupling_constant, stability_scan
from fieldparticle.kernels import radial_kernel_series
from fieldparticle.volterra import fit_decay, resolvent

wave = CouplingSpec(g=0.5, sigma=1.0, m=0.0, omega0=1.5)
klein_gordon = CouplingSpec(g=1.0, sigma=0.7, m=1.0, omega0=2.0)

# %%
# For the massless field with a Gaussian charge the kernels are Gaussian
# moments, so the numerical radial quadrature can be compared directly.
t = np.linspace(0, 6, 7)
d, gam = radial_kernel_series(wave, t)
a = wave.sigma ** 2
pref = 4 * np.pi / 3 * wave.g ** 2 * wave.sigma ** 6
d_exact = pref * np.sqrt(np.pi) * t / 4 * a ** -2.5 * (1.5 - t ** 2 / (4 * a)) * np.exp(-t ** 2 / (4 * a))
print("t      d(t)          closed form")
for row in zip(t, d, d_exact):
    print("{:4.1f}  {: .6e}  {: .6e}".format(*row))
print(f"K = gamma(0) = {gam[0]:.6f}   g^2 sigma^3 pi^1.5 / 3 = {wave.g ** 2 * np.pi ** 1.5 / 3:.6f}")

# %%
# The massive field has a band gap below ``m``: its kernels oscillate and
# decay only algebraically, while the massless ones die off like a Gaussian.
t = np.array([0.0, 5.0, 10.0, 20.0, 40.0])
for name, spec in (("WF", wave), ("KGF", klein_gordon)):
    d, _ = radial_kernel_series(spec, t)
    print(name, " ".join(f"{x: .2e}" for x in d))

# %%
# Stability is decided on the imaginary axis of the Laplace symbol.  A
# coupling that makes ``omega0^2 - K`` negative binds the particle to the
# field and the scan reports it.
for g in (0.5, 1.0, 1.6):
    rep = stability_scan(wave.replace(g=g), n_scan=200)
    print(f"g={g:3.1f}  K={coupling_constant(wave.replace(g=g)):.3f}  stable={rep.stable}  margin={rep.margin:.3f}")

# %%
# Finally the resolvent.  Its oscillation envelope decays exponentially for
# the wave field and like a power for the Klein-Gordon field.
for name, spec, window, model in (("WF", wave, (5, 40), "exponential"),
                                  ("KGF", klein_gordon, (20, 200), "power")):
    T = window[1]
    R = resolvent(build_kernel_table(spec, 0.02, T), 0.02, T)
    fit = fit_decay(R, window, model)
    value = fit.rate if model == "exponential" else fit.exponent
    print(f"{name}: {model} fit on {window}: {value:.3f} (r^2 = {fit.r_squared:.3f})")
