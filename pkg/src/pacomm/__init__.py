"""Community recovery in labeled preferential attachment graphs."""

from ._backend import BACKEND
from .generator import PAGraph, generate
from .inference import (
    InferenceError,
    LabelEstimate,
    canonicalize,
    estimate_all,
    joint_estimate,
    lambda_C,
    lambda_C_all,
    lambda_DT,
    lambda_DT_all,
    map_label,
    rate_estimate,
)
from .message_passing import MPConfig, balance, g_cp, g_pc, init_board, iterate, run_mp
from .model import (
    ModelError,
    ModelParams,
    RateTable,
    SolverError,
    load_params,
    preset,
    solve_eta_star,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "InferenceError",
    "LabelEstimate",
    "MPConfig",
    "ModelError",
    "ModelParams",
    "PAGraph",
    "RateTable",
    "SolverError",
    "balance",
    "canonicalize",
    "estimate_all",
    "g_cp",
    "g_pc",
    "generate",
    "init_board",
    "iterate",
    "joint_estimate",
    "lambda_C",
    "lambda_C_all",
    "lambda_DT",
    "lambda_DT_all",
    "load_params",
    "map_label",
    "preset",
    "rate_estimate",
    "run_mp",
    "solve_eta_star",
]
