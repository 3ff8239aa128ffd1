"""Simulation and analysis of preferential attachment with random initial degrees."""
from .engine import (ConfigurationError, Fitness, FitnessLaw, GraphState, ModelParams,
                     coupled_run, init, run, run_replications, step)
from .stats import EmpiricalStats
from .theory import exponents, limit_pk
from .weights import Constant, Explicit, ZetaPowerLaw, parse_weights

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "Fitness", "FitnessLaw", "GraphState", "ModelParams", "coupled_run",
    "init", "run", "run_replications", "step", "EmpiricalStats", "exponents", "limit_pk",
    "Constant", "Explicit", "ZetaPowerLaw", "parse_weights",
]
