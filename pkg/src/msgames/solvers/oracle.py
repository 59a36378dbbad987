"""Direct linear solve and equilibrium verification."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from ..analysis import pseudo_gradient
from ..errors import AssumptionViolation, ContractError
from ..model import FlatGame, MultiScaleGame, flatten
from . import _nb


def direct_linear_equilibrium(flat: FlatGame) -> np.ndarray:
    """Solve ``(2 diag(c) - W) x = b``; box constraints are ignored."""
    if isinstance(flat, MultiScaleGame):
        flat = flatten(flat)
    if not flat.is_linear:
        raise ContractError("direct solve needs linear best responses (no exponential terms)")
    M = (sparse.diags(2.0 * flat.c) - flat.W).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(M, flat.b) if flat.n > 1 else np.array([flat.b[0] / M[0, 0]])
        except (MatrixRankWarning, RuntimeError, ZeroDivisionError) as exc:
            raise AssumptionViolation("Assumption 1 violated: 2 diag(c) - W is singular") from exc
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise AssumptionViolation("Assumption 1 violated: 2 diag(c) - W is singular")
    return x


@dataclass
class EquilibriumCheck:
    max_residual: float
    max_gradient_interior: float
    residuals: np.ndarray
    boundary_agents: list = field(default_factory=list)
    boundary_stationary: bool = False

    def ok(self, tol: float) -> bool:
        return self.max_residual <= tol


def best_responses(flat: FlatGame, x, tol: float = 1e-12) -> np.ndarray:
    """``BR_i(x_{-i})`` for every agent, each computed against the fixed ``x``."""
    x = np.asarray(x, dtype=float)
    coupling = flat.W @ x
    sums = np.array([x[t.members].sum() for t in flat.group_terms])
    out = np.empty(flat.n)
    cap = 1 + max((len(t) for t in flat.terms_of), default=0)
    ek, er, es = np.empty(cap), np.empty(cap), np.empty(cap)
    for i in range(flat.n):
        ne = 0
        if flat.kappa[i] > 0:
            ek[0], er[0], es[0] = flat.kappa[i], 0.0, 1.0
            ne = 1
        for t in flat.terms_of[i]:
            term = flat.group_terms[t]
            ek[ne], er[ne], es[ne] = term.kappa, sums[t] - x[i], term.scale
            ne += 1
        out[i] = _nb.root(flat.b[i] + coupling[i], 2.0 * flat.c[i], ek, er, es, ne, 0.0, flat.lo[i], flat.hi[i], tol)[0]
    return out


def verify_equilibrium(target, x, tol: float = 1e-8) -> EquilibriumCheck:
    """Per-agent ``|x_i - BR_i(x_{-i})|``, plus ``max |F_i|`` over interior agents."""
    flat = flatten(target) if isinstance(target, MultiScaleGame) else target
    x = np.asarray(x, dtype=float)
    if x.shape != (flat.n,):
        raise ContractError(f"profile must have length {flat.n}")
    res = np.abs(x - best_responses(flat, x))
    at_bound = (x <= flat.lo) | (x >= flat.hi)
    F = pseudo_gradient(flat, x)
    interior = ~at_bound
    bound_idx = np.flatnonzero(at_bound)
    return EquilibriumCheck(
        max_residual=float(res.max()) if flat.n else 0.0,
        max_gradient_interior=float(np.abs(F[interior]).max()) if interior.any() else 0.0,
        residuals=res,
        boundary_agents=bound_idx.tolist(),
        boundary_stationary=bool(len(bound_idx)) and bool(np.all(res[bound_idx] <= tol)),
    )
