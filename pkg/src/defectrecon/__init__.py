"""Reconstruction of insulating defects (cracks, cavities) in a 2D conductor
from boundary current/voltage data, via phase-field energy minimization."""

from .grid import Grid, build_grid, p0_project, boundary_side_edges, SIDES
from .potentials import PotentialKind
from .fem import (assemble_stiffness, assemble_neumann_load,
                  solve_gauged_neumann, gamma_inner, gamma_mean,
                  CompatibilityError, ConvergenceError)
from .reconstruction import (PhaseField, ReconParams, ArmijoParams,
                             BoundaryData, initial_phase, default_eps_schedule,
                             boundary_data_from_dataset, boundary_data_from_nodal,
                             run_reconstruction, assemble_gradient, eval_cost,
                             riesz_lift)
from .datagen import (DefectSpec, NoiseSpec, CauchyDataset, build_fine_model,
                      electrode_pair_flux, simulate_measurement, add_noise,
                      generate_suite)
from .config import ExperimentConfig, ConfigError, parse_config, load_config

__all__ = [
    "Grid", "build_grid", "p0_project", "boundary_side_edges", "SIDES",
    "PotentialKind",
    "assemble_stiffness", "assemble_neumann_load", "solve_gauged_neumann",
    "gamma_inner", "gamma_mean", "CompatibilityError", "ConvergenceError",
    "PhaseField", "ReconParams", "ArmijoParams", "BoundaryData",
    "initial_phase", "default_eps_schedule", "boundary_data_from_dataset",
    "boundary_data_from_nodal", "run_reconstruction", "assemble_gradient",
    "eval_cost", "riesz_lift",
    "DefectSpec", "NoiseSpec", "CauchyDataset", "build_fine_model",
    "electrode_pair_flux", "simulate_measurement", "add_noise",
    "generate_suite",
    "ExperimentConfig", "ConfigError", "parse_config", "load_config",
]

__version__ = "0.1.0"
