from .bnb import solve_milp
from .encode import (
    RobustnessEncoding,
    encode_concrete_robustness,
    encode_hyper_robustness,
    encode_with_negative_lb,
    is_certified,
)
from .model import FEAS_TOL, Constraint, MilpModel, MilpSolution, Status
from .simplex import SimplexError, solve_lp

__all__ = [
    "FEAS_TOL",
    "Constraint",
    "MilpModel",
    "MilpSolution",
    "RobustnessEncoding",
    "SimplexError",
    "Status",
    "encode_concrete_robustness",
    "encode_hyper_robustness",
    "encode_with_negative_lb",
    "is_certified",
    "solve_lp",
    "solve_milp",
]
