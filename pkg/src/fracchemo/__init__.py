"""Lattice models and Monte Carlo walkers for chemotaxis with anomalous subdiffusion."""
from __future__ import annotations

__version__ = "0.1.0"

from .chemo import JumpProbabilities, Sensitivity, jump_probabilities, lattice_jump_probabilities, self_chemoattractant
from .config import ConfigError, SimulationConfig
from .densities import DensityKind, WaitingTimeLaw
from .export import ComparisonReport, ProfileSet, compare_profiles, export_profiles, read_profiles
from .mc import EnsembleResult, fit_msd_exponent, mean_square_displacement, run_ensemble, run_single
from .solvers import LatticeField, Model, ModelSpec, NumericalError, Trajectory, delta_field, solve

__all__ = [
    "__version__",
    "JumpProbabilities",
    "Sensitivity",
    "jump_probabilities",
    "lattice_jump_probabilities",
    "self_chemoattractant",
    "ConfigError",
    "SimulationConfig",
    "DensityKind",
    "WaitingTimeLaw",
    "ComparisonReport",
    "ProfileSet",
    "compare_profiles",
    "export_profiles",
    "read_profiles",
    "EnsembleResult",
    "fit_msd_exponent",
    "mean_square_displacement",
    "run_ensemble",
    "run_single",
    "LatticeField",
    "Model",
    "ModelSpec",
    "NumericalError",
    "Trajectory",
    "delta_field",
    "solve",
]
