"""Consistency between the flat game and a group-stage game with group costs.

The group stage treats each level-2 group as one player with utility
``b_G y + y (V y)_k - c_k y^2``. Its equilibrium matches the aggregates of the
flat equilibrium exactly when ``c_k = (V y* + b_G)_k / (2 y*_k)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, splu, spsolve

from .errors import AssumptionViolation, ContractError
from .model import MultiScaleGame, flatten
from .solvers.oracle import direct_linear_equilibrium

DEFAULT_TOL = 1e-8


@dataclass
class GroupStageGame:
    V: sparse.csr_matrix
    b_G: np.ndarray
    c_group: np.ndarray

    def __post_init__(self):
        self.V = sparse.csr_matrix(self.V, dtype=float)
        M = self.V.shape[0]
        self.b_G = np.broadcast_to(np.asarray(self.b_G, dtype=float), (M,)).copy()
        self.c_group = np.broadcast_to(np.asarray(self.c_group, dtype=float), (M,)).copy()
        if np.any(self.V.diagonal() != 0):
            raise ContractError("V must have a zero diagonal")
        if np.any(self.c_group <= 0):
            raise ContractError("group costs must be positive")


@dataclass
class ConsistencyVerdict:
    consistent: bool
    max_gap: float
    c_star: np.ndarray
    group_equilibrium: np.ndarray = field(default=None)
    flat_aggregates: np.ndarray = field(default=None)

    def to_dict(self) -> dict:
        return {
            "c_star": [None if not np.isfinite(v) else float(v) for v in self.c_star],
            "max_gap": float(self.max_gap),
            "consistent": bool(self.consistent),
        }


def group_stage_equilibrium(gs: GroupStageGame) -> np.ndarray:
    """Solve ``(2 diag(c) - V) y = b_G``."""
    M = (sparse.diags(2.0 * gs.c_group) - gs.V).tocsc()
    if M.shape[0] == 1:
        return np.array([gs.b_G[0] / M[0, 0]])
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", MatrixRankWarning)
        try:
            y = spsolve(M, gs.b_G)
        except RuntimeError as exc:
            raise AssumptionViolation("Assumption 1 violated: group-stage system is singular") from exc
    y = np.atleast_1d(y)
    if not np.all(np.isfinite(y)):
        raise AssumptionViolation("Assumption 1 violated: group-stage system is singular")
    return y


def _aggregates(x, partition) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([x[np.asarray(g, dtype=np.int64)].sum() for g in partition])


def compute_consistent_costs(flat_eq, partition, V, b_G) -> np.ndarray:
    """``c* = (V y* + b_G) / (2 y*)`` with ``y*`` the group sums of ``flat_eq``."""
    y = _aggregates(flat_eq, partition)
    zero = np.flatnonzero(y == 0)
    if len(zero):
        raise ContractError(f"consistency cost undefined for group {int(zero[0])} (zero aggregate)")
    V = sparse.csr_matrix(V, dtype=float)
    b_G = np.broadcast_to(np.asarray(b_G, dtype=float), y.shape)
    return (V @ y + b_G) / (2.0 * y)


def _check_two_level_linear(game: MultiScaleGame):
    if game.L != 2:
        raise ContractError("consistency is defined for 2-level games")
    if not game.is_linear:
        raise ContractError("consistency is defined for linear games")


def check_consistency(game: MultiScaleGame, c_group=None, tol: float = DEFAULT_TOL) -> ConsistencyVerdict:
    """Compare the group-stage equilibrium under ``c_group`` with the flat equilibrium's aggregates.

    ``c_group`` defaults to ``c*``, which is consistent by construction.
    """
    _check_two_level_linear(game)
    x = direct_linear_equilibrium(flatten(game))
    partition = game.levels[0].groups
    y = _aggregates(x, partition)
    V = game.interaction(2)
    b_G = game.group_b(2)
    with np.errstate(divide="ignore", invalid="ignore"):
        c_star = np.where(y != 0, (V @ y + b_G) / (2.0 * np.where(y != 0, y, 1.0)), np.nan)
    if c_group is None:
        if not np.all(np.isfinite(c_star)) or np.any(c_star <= 0):
            raise ContractError("c* is not a valid positive cost vector; pass c_group explicitly")
        c_group = c_star
    y_tilde = group_stage_equilibrium(GroupStageGame(V, b_G, c_group))
    gap = float(np.max(np.abs(y_tilde - y)))
    return ConsistencyVerdict(gap <= tol, gap, c_star, y_tilde, y)


@dataclass
class CalibrationResult:
    c_group: np.ndarray
    x: np.ndarray
    y_tilde: np.ndarray
    converged: bool
    rounds: int
    flags: list = field(default_factory=list)


def calibrate_iterative(
    game: MultiScaleGame,
    s1: int | None = 1,
    s2: int = 1,
    c0=None,
    tol: float = 1e-10,
    max_rounds: int = 100_000,
) -> CalibrationResult:
    """Alternate group-stage sweeps, agent sweeps and the group-cost update.

    Each round runs ``s2`` Gauss-Seidel sweeps of the group stage, then ``s1``
    Gauss-Seidel sweeps of the agents (each agent sees its own group's members
    directly and other groups through their group-stage actions), then sets
    ``c_k = (V y + b_G)_k / (2 y_k)`` from the agents' aggregates ``y``.
    ``s1=None`` solves the agent stage exactly. Stops when ``x``, ``y~`` and
    ``c`` all move less than ``tol``.
    """
    _check_two_level_linear(game)
    if s2 < 1 or (s1 is not None and s1 < 1):
        raise ContractError("s1 and s2 must be at least 1")
    flat = flatten(game)
    level = game.levels[0]
    parent = level.parent_of
    M = level.n_groups
    V = game.interaction(2).tocsr()
    b_G = game.group_b(2)
    # agents couple directly only inside their group; other groups enter through y~
    Wb = level.block_matrix().tocsr()
    c = 2.0 * game.utility.c
    b = flat.b
    c_group = np.ones(M) if c0 is None else np.broadcast_to(np.asarray(c0, dtype=float), (M,)).copy()
    if np.any(c_group <= 0):
        raise ContractError("initial group costs must be positive")
    x = np.zeros(game.n)
    y_t = np.zeros(M)
    flags = []
    blocks = None
    if s1 is None:
        blocks = []
        for g, w in zip(level.groups, level.within_group_adjacency):
            blocks.append(splu((sparse.diags(c[g]) - w).tocsc()))
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        x_old, y_old, c_old = x.copy(), y_t.copy(), c_group.copy()
        for _ in range(s2):
            for k in range(M):
                s, e = V.indptr[k], V.indptr[k + 1]
                y_t[k] = (b_G[k] + V.data[s:e] @ y_t[V.indices[s:e]]) / (2.0 * c_group[k])
        ext = (V @ y_t)[parent]
        if blocks is not None:
            for g, lu in zip(level.groups, blocks):
                x[g] = lu.solve(b[g] + ext[g])
        else:
            for _ in range(s1):
                for i in range(game.n):
                    s, e = Wb.indptr[i], Wb.indptr[i + 1]
                    x[i] = (b[i] + ext[i] + Wb.data[s:e] @ x[Wb.indices[s:e]]) / c[i]
        y = np.bincount(parent, weights=x, minlength=M)
        upd = (V @ y + b_G)
        ok = (y != 0) & (upd / np.where(y != 0, y, 1.0) > 0)
        if not ok.all():
            flags.append(f"round {rounds}: cost update skipped for groups {np.flatnonzero(~ok)[:10].tolist()}")
        c_group[ok] = upd[ok] / (2.0 * y[ok])
        change = max(
            float(np.max(np.abs(x - x_old))),
            float(np.max(np.abs(y_t - y_old))),
            float(np.max(np.abs(c_group - c_old))),
        )
        if not np.isfinite(change):
            flags.append("diverged")
            break
        if change < tol:
            converged = True
            break
    return CalibrationResult(c_group, x, y_t, converged, rounds, flags)
