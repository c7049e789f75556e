"""Configuration, seeded data, experiment presets and file output."""

from ..rng import RngStream, gaussian_matrix
from .config import ExperimentConfig, load_config, preset_config, save_config
from .io import read_csv, write_csv, write_plot
from .presets import build_problem, run_preset

__all__ = [
    "ExperimentConfig",
    "RngStream",
    "build_problem",
    "gaussian_matrix",
    "load_config",
    "preset_config",
    "read_csv",
    "run_preset",
    "save_config",
    "write_csv",
    "write_plot",
]
