"""Finite-volume simulation of a strategic population coupled to a retraining classifier."""
from . import kernels
from .config import ConfigError, ScenarioConfig, load_config, write_config
from .dynamics import Regime, SolverError, Trajectory, run, run_two_populations, simulate
from .grid import Density, Grid, discretize, gaussian_density, moment, sample
from .model import EnergyModel, InteractionKernel, LogisticCost, LogisticCost2D, ReferenceDistribution

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Density", "EnergyModel", "Grid", "InteractionKernel", "LogisticCost",
    "LogisticCost2D", "ReferenceDistribution", "Regime", "ScenarioConfig", "SolverError",
    "Trajectory", "discretize", "gaussian_density", "kernels", "load_config", "moment", "run",
    "run_two_populations", "sample", "simulate", "write_config",
]
