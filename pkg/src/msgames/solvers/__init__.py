"""Equilibrium solvers."""

from .brd import solve_brd
from .common import PenaltyState, SolverOptions, SolverReport
from .flops import count_flops
from .kernels import RootResult, best_response_linear, best_response_scalar, solve_structured
from .oracle import EquilibriumCheck, best_responses, direct_linear_equilibrium, verify_equilibrium
from .staged import default_penalty_weights, solve_hh_brd, solve_ms_brd, solve_sh_brd

__all__ = [
    "EquilibriumCheck",
    "PenaltyState",
    "RootResult",
    "SolverOptions",
    "SolverReport",
    "best_response_linear",
    "best_responses",
    "count_flops",
    "direct_linear_equilibrium",
    "best_response_scalar",
    "default_penalty_weights",
    "solve_brd",
    "solve_hh_brd",
    "solve_ms_brd",
    "solve_sh_brd",
    "solve_structured",
    "verify_equilibrium",
]
