"""Spectral computation of stationary states for multicomponent
coupled-mode phase-field-crystal models, with an adaptive block Bregman
proximal gradient solver and gradient-flow baseline schemes."""

from .baselines import BaselineOptions, run_baseline
from .model import EnergyBreakdown, ModelSpec, State, energy, residual
from .optimizer import BlockSchedule, DivergenceError, SolverOptions, solve
from .presets import Preset, get_preset, preset, sigma_ternary_model
from .report import RunReport, density_slice, write_summary_json, write_trajectory_csv
from .spectral import (
    GridSpec,
    SpectralField,
    make_grid,
    random_field,
    read_field_dump,
    to_physical,
    to_spectral,
    write_field_dump,
)

__all__ = [
    "BaselineOptions",
    "BlockSchedule",
    "DivergenceError",
    "EnergyBreakdown",
    "GridSpec",
    "ModelSpec",
    "Preset",
    "RunReport",
    "SolverOptions",
    "SpectralField",
    "State",
    "density_slice",
    "energy",
    "get_preset",
    "make_grid",
    "preset",
    "random_field",
    "read_field_dump",
    "residual",
    "run_baseline",
    "sigma_ternary_model",
    "solve",
    "to_physical",
    "to_spectral",
    "write_field_dump",
    "write_summary_json",
    "write_trajectory_csv",
]

__version__ = "0.1.0"
