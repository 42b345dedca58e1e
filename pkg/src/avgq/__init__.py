"""Quantized Q-learning and finite-model solvers for average cost MDPs."""

from .core import (
    ACOESolution,
    AssumptionError,
    ContinuousModel,
    ConvergenceError,
    DomainError,
    FiniteModel,
    Minorization,
    StationaryPolicy,
    lift_policy,
)
from .environments import case_study, halving, make_model, synthetic_finite
from .quantization import QuantizationScheme, StateQuantizer, build_finite_model, loss_bound
from .solver import ACOESolver, SolverConfig, brute_force_gain, solve, vanishing_discount
from .q_sync import SyncConfig, SyncQuantizedQLearning, train_sync
from .q_async import AsyncConfig, AsyncQuantizedQLearning, train_async
from .evaluation import EvalConfig, evaluate_policy, sweep_quantization

__version__ = "0.1.0"
