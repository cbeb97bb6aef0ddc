"""Simulator and verification harness for a viscous Cahn-Hilliard system with
nonstandard coupling and dynamic boundary conditions."""

from .dynamics import HardFailure, SchemeParams, simulate, step, sweep_epsilon
from .mesh import FieldState, Grid, build_grid, discrete_energy
from .potentials import PotentialConfig, check_hypotheses, separation_bounds
from .stationary import omega_limit_study, solve_stationary

__version__ = "0.1.0"

__all__ = [
    "FieldState",
    "Grid",
    "HardFailure",
    "PotentialConfig",
    "SchemeParams",
    "build_grid",
    "check_hypotheses",
    "discrete_energy",
    "omega_limit_study",
    "separation_bounds",
    "simulate",
    "solve_stationary",
    "step",
    "sweep_epsilon",
]
