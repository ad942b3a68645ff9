"""Sensitivity of finite-horizon Markov decision models to transition perturbations."""
from ._backend import BACKEND, available_backends
from .errors import CapExceededError, MdpSenseError, NumericalError, ShapeError, ValidationError
from .metrics import DiscreteMeasure, d_hoelder, d_inf, d_kolm, d_tv, d_wass1
from .model import FiniteMdm, Sense, Strategy, TransitionFunction, ValidationReport, from_arrays, validate
from .sensitivity import (
    FdRow,
    SensitivityResult,
    fd_quotient,
    fd_quotient_fixed,
    fd_report,
    frechet_fixed,
    frechet_fixed_direct,
    hadamard_optimal,
    mixture,
    remainder_bound,
)
from .solve import (
    StrategySet,
    StrategySetKind,
    bellman,
    count_optimal_strategies,
    enumerate_delta_optimal,
    enumerate_optimal_strategies,
    path_oracle,
    reward_iteration,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "available_backends",
    "CapExceededError", "MdpSenseError", "NumericalError", "ShapeError", "ValidationError",
    "DiscreteMeasure", "d_hoelder", "d_inf", "d_kolm", "d_tv", "d_wass1",
    "FiniteMdm", "Sense", "Strategy", "TransitionFunction", "ValidationReport", "from_arrays", "validate",
    "FdRow", "SensitivityResult", "fd_quotient", "fd_quotient_fixed", "fd_report", "frechet_fixed",
    "frechet_fixed_direct", "hadamard_optimal", "mixture", "remainder_bound",
    "StrategySet", "StrategySetKind", "bellman", "count_optimal_strategies", "enumerate_delta_optimal",
    "enumerate_optimal_strategies", "path_oracle", "reward_iteration",
]
