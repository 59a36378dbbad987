"""Solver options, penalty state and reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ContractError
from ..model import StrategyProfile

SWEEP_MODES = ("gauss_seidel", "jacobi")
LQP_MU_DEFAULT = 0.5


@dataclass
class SolverOptions:
    """Knobs shared by every algorithm.

    ``penalty_weights`` maps a level ``l >= 2`` to ``h^(l)`` (scalar or one value
    per level-``l`` agent); missing levels get :func:`default_penalty_weights`.
    ``lqp_mu`` of ``None`` disables the logarithmic-quadratic proximal term.
    """

    epsilon: float = 1e-6
    max_sweeps: int = 100_000
    sweep_mode: str = "gauss_seidel"
    lqp_mu: float | None = None
    penalty_weights: dict = field(default_factory=dict)
    hh_split: int | None = None
    x0: Any = None
    record_iterates: bool = False
    time_limit: float | None = None
    root_tol: float = 1e-12

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")
        if self.max_sweeps < 1:
            raise ContractError("max_sweeps must be at least 1")
        if self.sweep_mode not in SWEEP_MODES:
            raise ContractError(f"sweep_mode must be one of {SWEEP_MODES}")
        if self.lqp_mu is not None and not 0 < self.lqp_mu < 5 / 9:
            raise ContractError("lqp_mu must lie in (0, 5/9)")
        for lvl, h in dict(self.penalty_weights).items():
            if int(lvl) < 2:
                raise ContractError("penalty weights are defined for levels >= 2")
            if np.any(np.asarray(h, dtype=float) <= 0):
                raise ContractError(f"penalty weight for level {lvl} must be positive")
        self.penalty_weights = {int(k): v for k, v in dict(self.penalty_weights).items()}
        if self.time_limit is not None and not self.time_limit > 0:
            raise ContractError("time_limit must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        d = dict(d)
        if d.get("lqp_mu") == "default":
            d["lqp_mu"] = LQP_MU_DEFAULT
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown solver option(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class PenaltyState:
    """Multipliers and weights per boundary level, plus LQP anchors."""

    lam: dict = field(default_factory=dict)
    h: dict = field(default_factory=dict)
    prev: dict = field(default_factory=dict)

    def update(self, level: int, sigma: np.ndarray, target: np.ndarray) -> np.ndarray:
        """``lambda <- lambda - h (sigma - target)``; returns the step taken."""
        step = self.h[level] * (sigma - target)
        self.lam[level] = self.lam[level] - step
        return step


@dataclass
class SolverReport:
    algorithm: str
    converged: bool
    sweeps: int
    flops: int
    final_profile: StrategyProfile
    residual_inf: float
    boundary_hits: int = 0
    trajectory_norms: list = field(default_factory=list)
    wall_ms: float = 0.0
    flags: list = field(default_factory=list)
    penalty_state: PenaltyState | None = None
    iterates: list | None = None
    feasibility_inf: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.final_profile.x1

    def to_dict(self, include_profile: bool = True) -> dict:
        d = {
            "algorithm": self.algorithm,
            "converged": bool(self.converged),
            "sweeps": int(self.sweeps),
            "flops": int(self.flops),
            "residual_inf": float(self.residual_inf),
            "feasibility_inf": float(self.feasibility_inf),
            "boundary_hits": int(self.boundary_hits),
            "wall_ms": float(self.wall_ms),
            "flags": list(self.flags),
            "trajectory_norms": [float(v) for v in self.trajectory_norms],
        }
        if include_profile:
            d["x"] = self.final_profile.x1.tolist()
        return d
