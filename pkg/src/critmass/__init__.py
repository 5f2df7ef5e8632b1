"""Radial numerical laboratory for the critical degenerate Keller-Segel system.

The package evolves the aggregation-diffusion equation with exponent
``m = 2(d-1)/d`` in radial symmetry, computes stationary and self-similar
profiles by shooting, maximises the VHLS ratio, and monitors the energy,
virial and blow-up diagnostics that separate the sub-critical, critical
and super-critical regimes.
"""
from .energetics import (
    critical_mass,
    dissipation,
    energy_report,
    free_energy,
    rescaled_energy,
    vhls_ratio,
)
from .evolution import BlowupReport, EvolutionState, SolverConfig, run, step, virial_upper_bound
from .poisson import interaction_energy, newton_potential, potential_gradient
from .radial import ModelParams, RadialGrid, RadialProfile, make_grid, mass, remap, rescale
from .stationary import (
    lane_emden_unit_ball,
    self_similar_profile,
    self_similar_solution,
    stationary_profile,
)
from .vhls import AscentConfig, maximize_lambda, symmetric_decreasing_projection

__version__ = "0.1.0"

__all__ = [
    "AscentConfig",
    "BlowupReport",
    "EvolutionState",
    "ModelParams",
    "RadialGrid",
    "RadialProfile",
    "SolverConfig",
    "critical_mass",
    "dissipation",
    "energy_report",
    "free_energy",
    "interaction_energy",
    "lane_emden_unit_ball",
    "make_grid",
    "mass",
    "maximize_lambda",
    "newton_potential",
    "potential_gradient",
    "remap",
    "rescale",
    "rescaled_energy",
    "run",
    "self_similar_profile",
    "self_similar_solution",
    "stationary_profile",
    "step",
    "symmetric_decreasing_projection",
    "vhls_ratio",
    "virial_upper_bound",
]
