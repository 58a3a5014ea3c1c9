"""Numerical laboratory for a particle coupled to a wave or Klein-Gordon field."""
from .spectral_core import CouplingSpec, ModeGrid
from .kernels import KernelTable, build_kernel_table, coupling_constant, stability_scan
from .volterra import ResolventTable, fit_decay, resolvent, solve_volterra
from .random_fields import SpectralDensity, generic_density, gibbs_field_density, two_temperature_density
from .dynamics import LatticeSystem, SystemState, evolve_leapfrog, evolve_spectral_duhamel, hamiltonian
from .equilibrium import Ensemble, Observable, limit_field_covariance, limit_form, projected_observable
from .config import ExperimentConfig, load_config

__all__ = [
    "CouplingSpec", "ModeGrid",
    "KernelTable", "build_kernel_table", "coupling_constant", "stability_scan",
    "ResolventTable", "fit_decay", "resolvent", "solve_volterra",
    "SpectralDensity", "generic_density", "gibbs_field_density", "two_temperature_density",
    "LatticeSystem", "SystemState", "evolve_leapfrog", "evolve_spectral_duhamel", "hamiltonian",
    "Ensemble", "Observable", "limit_field_covariance", "limit_form", "projected_observable",
    "ExperimentConfig", "load_config",
]
