"""Staged best-response engine behind MS-BRD, SH-BRD and HH-BRD.

A *stage* covers consecutive levels ``a..b``. Its agents are the level-``a``
agents; each one maximises the sum of the utility components of levels
``a..b`` it belongs to, with aggregates built from the stage's own actions.
Adjacent stages are tied by the constraint that the level-``(b+1)`` aggregate
of the lower stage equals the upper stage's actions, relaxed by quadratic
penalties with weights ``h`` and multipliers ``lambda``:

* lower penalty on an upper-stage agent ``z``: ``h [z - sigma + lambda]^2``
* upper penalty on a lower-stage agent: ``h [sigma_up - y~ - lambda]^2``
* after every sweep: ``lambda <- lambda - h (sigma - y~)``

One stage spanning all levels is MS-BRD (no penalties); one stage per level is
SH-BRD; two stages split at level ``q`` is HH-BRD.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
from scipy.sparse.linalg import LinearOperator

from ..analysis import spectral_radius
from ..errors import ContractError
from ..model import MultiScaleGame, StrategyProfile, refresh_aggregates, validate
from .common import PenaltyState, SolverOptions, SolverReport
from . import _nb


def default_penalty_weights(game: MultiScaleGame, level: int, top: int | None = None) -> float:
    """Default ``h^(level)`` for a stage spanning levels ``level..top``.

    ``0.75 * rho(F)`` clipped to ``[0.5, 1.9]``, where ``F`` is the stage's
    interaction among level-``level`` agents with the weights of higher stage
    levels spread onto member pairs. Multipliers of a decoupled group follow
    ``lambda' = (1 - h) lambda``, hence the upper clip below 2; the stage
    itself needs ``2h`` above ``rho(F)``, hence the factor.
    """
    top = level if top is None else top
    maps = [game.ancestor_map(level, l) for l in range(level, top + 1)]
    mats = [abs(game.interaction(l)) for l in range(level, top + 1)]
    sizes = [game.population(l) for l in range(level, top + 1)]

    def apply(v):
        out = np.zeros_like(v)
        for anc, g, m in zip(maps, mats, sizes):
            if g.nnz:
                out += (g @ np.bincount(anc, weights=v, minlength=m))[anc]
        return out

    rho = spectral_radius(LinearOperator((len(maps[0]),) * 2, matvec=apply, dtype=float))[0]
    return float(min(max(0.75 * rho, 0.5), 1.9))


class _Stage:
    """Flat-array description of one stage, consumed by the compiled sweep."""

    def __init__(self, game: MultiScaleGame, a: int, b: int):
        self.a, self.b = a, b
        n = self.n = game.population(a)
        self.has_upper = b < game.L
        top = b + 1 if self.has_upper else b
        lv = list(range(a, top + 1))
        self.maps = [game.ancestor_map(a, l) for l in lv]
        self.sizes = [game.population(l) for l in lv]
        self.base = np.concatenate(([0], np.cumsum(self.sizes)))
        self.anc_up = np.stack(
            [self.maps[o] + self.base[o] for o in range(1, len(lv))], axis=1
        ).astype(np.int64) if len(lv) > 1 else np.zeros((n, 0), dtype=np.int64)
        self.up_local = self.maps[-1] if self.has_upper else None
        self.up_idx = self.anc_up[:, -1].copy() if self.has_upper else np.zeros(n, dtype=np.int64)
        if a == 1:
            self.lo = game.box.lo.copy()
            self.hi = game.box.hi.copy()
        else:
            anc = game.ancestor_map(1, a)
            self.lo = np.bincount(anc, weights=game.box.lo, minlength=n)
            self.hi = np.bincount(anc, weights=game.box.hi, minlength=n)
        self.gamma0 = 2.0 * game.utility.c if a == 1 else np.zeros(n)

        nterm = b - a + 1
        shape = (n, nterm)
        self.t_k = np.empty(shape, dtype=np.int64)
        self.t_s = np.empty(shape, dtype=np.int64)
        self.t_e = np.empty(shape, dtype=np.int64)
        self.t_bc = np.empty(shape)
        self.t_kap = np.empty(shape)
        self.t_S = np.empty(shape)
        nb_idx, nb_w = [], []
        off = 0
        for o, l in enumerate(range(a, b + 1)):
            g = game.interaction(l)
            if l == 1:
                bl, kap, S = game.utility.b, game.utility.kappa, np.ones(n)
            else:
                bl, kap, S = game.group_b(l), game.group_kappa(l), game.leaf_counts(l)
            k = self.maps[o]
            self.t_k[:, o] = k + self.base[o]
            self.t_s[:, o] = g.indptr[k] + off
            self.t_e[:, o] = g.indptr[k + 1] + off
            self.t_bc[:, o] = bl[k]
            self.t_kap[:, o] = kap[k]
            self.t_S[:, o] = S[k]
            nb_idx.append(g.indices.astype(np.int64) + self.base[o])
            nb_w.append(g.data.astype(float))
            off += g.nnz
        self.nb_idx = np.concatenate(nb_idx) if nb_idx else np.zeros(0, dtype=np.int64)
        self.nb_w = np.concatenate(nb_w) if nb_w else np.zeros(0)
        self.agg_cost = self._aggregation_cost(game)

    def _aggregation_cost(self, game: MultiScaleGame) -> int:
        """Model flops to aggregate every group whose aggregate is consumed."""
        a, b = self.a, self.b
        top = b + 1 if self.has_upper else b
        needed = {}
        for l in range(a + 1, top + 1):
            if l == b + 1:
                need = np.ones(game.population(l), dtype=bool)
            else:
                g = game.interaction(l).tocoo()
                need = np.zeros(game.population(l), dtype=bool)
                need[g.col] = True
                need |= game.group_kappa(l) > 0
            needed[l] = need
        cost = 0
        for l in range(top, a, -1):
            h = game.levels[l - 2]
            sizes = np.array([len(gr) for gr in h.groups])
            need = needed[l]
            cost += int((sizes[need] - 1).sum())
            if l - 1 > a:
                needed[l - 1] = needed[l - 1] | need[h.parent_of]
        return cost

    def refresh(self, vals: np.ndarray) -> np.ndarray:
        """Recompute every aggregate segment exactly from the stage actions."""
        z = vals[: self.n]
        for o in range(1, len(self.sizes)):
            vals[self.base[o]:self.base[o + 1]] = np.bincount(self.maps[o], weights=z, minlength=self.sizes[o])
        return vals

    def z(self, vals):
        return vals[: self.n]

    def top(self, vals):
        return vals[self.base[-2]:self.base[-1]]


def _stage_split(game: MultiScaleGame, kind: str, q: int | None):
    L = game.L
    if kind == "ms":
        return [(1, L)]
    if kind == "sh":
        return [(l, l) for l in range(1, L + 1)]
    if q is None:
        q = math.ceil((L + 1) / 2)
    if not 2 <= q <= L:
        raise ContractError(f"split level q must lie in [2, {L}]")
    return [(1, q - 1), (q, L)]


def run_staged(game: MultiScaleGame, stages, opts: SolverOptions, algorithm: str, use_lqp: bool = False) -> SolverReport:
    t_start = time.perf_counter()
    violations = validate(game)
    if violations:
        raise ContractError("invalid game: " + "; ".join(v.message for v in violations))
    plan = [_Stage(game, a, b) for a, b in stages]
    gs = opts.sweep_mode == "gauss_seidel"
    mu = float(opts.lqp_mu) if use_lqp else 0.0
    flags = []

    x0 = np.zeros(game.n) if opts.x0 is None else np.asarray(opts.x0, dtype=float).copy()
    if x0.shape != (game.n,):
        raise ContractError(f"x0 must have length {game.n}")
    np.clip(x0, game.box.lo, game.box.hi, out=x0)
    init = refresh_aggregates(StrategyProfile(x0), game)
    vals = []
    for st in plan:
        v = np.zeros(st.base[-1])
        v[: st.n] = init.level(st.a)
        vals.append(st.refresh(v))

    pen = PenaltyState()
    for st in plan[1:]:
        l = st.a
        h = opts.penalty_weights.get(l)
        if h is None:
            h = default_penalty_weights(game, l, st.b)
        pen.h[l] = np.broadcast_to(np.asarray(h, dtype=float), (game.population(l),)).copy()
        pen.lam[l] = np.zeros(game.population(l))

    lqp_on = [np.ones(st.n, dtype=np.bool_) for st in plan]
    empty = np.zeros(0)
    flops = 0
    hits = 0
    norms = []
    iterates = [x0.copy()] if opts.record_iterates else None
    converged = False
    change = math.inf
    sweeps = 0
    for sweep in range(1, opts.max_sweeps + 1):
        sweeps = sweep
        prev = [st.z(v).copy() for st, v in zip(plan, vals)]
        for s, st in enumerate(plan):
            v = vals[s]
            has_low = s > 0
            if has_low:
                hl = pen.h[st.a]
                low_b = 2.0 * hl * (plan[s - 1].top(vals[s - 1]) - pen.lam[st.a])
                low_g = 2.0 * hl
            else:
                low_b = low_g = empty
            if st.has_upper:
                hu = pen.h[st.b + 1][st.up_local]
                target = plan[s + 1].z(vals[s + 1]) + pen.lam[st.b + 1]
                up_b = 2.0 * hu * target[st.up_local]
                up_g = 2.0 * hu
            else:
                up_b = up_g = empty
            rd = v if gs else v.copy()
            npen = int(has_low) + int(st.has_upper)
            f, hcount = _nb.stage_sweep(
                rd, v, st.n, gs,
                st.t_k, st.t_s, st.t_e, st.t_bc, st.t_kap, st.t_S,
                st.nb_idx, st.nb_w,
                st.gamma0, st.lo, st.hi,
                has_low, low_b, low_g,
                st.has_upper, st.up_idx, up_b, up_g,
                st.anc_up,
                use_lqp, mu, prev[s], lqp_on[s],
                opts.root_tol, npen,
            )
            flops += f + st.agg_cost
            hits += hcount
            st.refresh(v)
        lam_change = 0.0
        for s in range(1, len(plan)):
            l = plan[s].a
            step = pen.update(l, plan[s - 1].top(vals[s - 1]), plan[s].z(vals[s]))
            flops += 3 * len(step)
            if len(step):
                lam_change = max(lam_change, float(np.max(np.abs(step))))
        change = max([float(np.max(np.abs(st.z(v) - p))) for st, v, p in zip(plan, vals, prev)] + [lam_change])
        norms.append(change)
        if iterates is not None:
            iterates.append(plan[0].z(vals[0]).copy())
        if change < opts.epsilon:
            converged = True
            break
        if not math.isfinite(change):
            flags.append("diverged")
            break
        if opts.time_limit is not None and time.perf_counter() - t_start > opts.time_limit:
            flags.append("timeout")
            break

    for s, st in enumerate(plan):
        off = np.flatnonzero(~lqp_on[s])
        if use_lqp and len(off):
            flags.append(f"lqp disabled for level-{st.a} agents {off[:10].tolist()} (negative anchor)")
    profile = refresh_aggregates(StrategyProfile(plan[0].z(vals[0]).copy()), game)
    feas = 0.0
    for s in range(1, len(plan)):
        feas = max(feas, float(np.max(np.abs(plan[s - 1].top(vals[s - 1]) - plan[s].z(vals[s])))))
    pen.prev = {st.a: st.z(v).copy() for st, v in zip(plan, vals)}
    return SolverReport(
        algorithm=algorithm,
        converged=converged,
        sweeps=sweeps,
        flops=int(flops),
        final_profile=profile,
        residual_inf=change,
        boundary_hits=hits,
        trajectory_norms=norms,
        wall_ms=1000.0 * (time.perf_counter() - t_start),
        flags=flags,
        penalty_state=pen if len(plan) > 1 else None,
        iterates=iterates,
        feasibility_inf=feas,
    )


def solve_ms_brd(game: MultiScaleGame, opts: SolverOptions | None = None) -> SolverReport:
    """Best-response dynamics on the compact multi-scale utilities.

    Produces the same iterates as BRD on the flattened game, but each best
    response reads within-group neighbours and neighbouring group aggregates.
    """
    return run_staged(game, _stage_split(game, "ms", None), opts or SolverOptions(), "ms-brd")


def solve_sh_brd(game: MultiScaleGame, opts: SolverOptions | None = None) -> SolverReport:
    """Separated hierarchical BRD: one penalised pseudo-game per level."""
    opts = opts or SolverOptions()
    if game.L > 2:
        warnings.warn("SH-BRD convergence is only guaranteed for 2-level games", RuntimeWarning, stacklevel=2)
    return run_staged(game, _stage_split(game, "sh", None), opts, "sh-brd", use_lqp=opts.lqp_mu is not None)


def solve_hh_brd(game: MultiScaleGame, opts: SolverOptions | None = None) -> SolverReport:
    """Hybrid hierarchical BRD: levels ``< q`` and ``>= q`` form two meta-levels."""
    opts = opts or SolverOptions()
    if game.L < 2:
        raise ContractError("HH-BRD needs at least two levels")
    return run_staged(game, _stage_split(game, "hh", opts.hh_split), opts, "hh-brd", use_lqp=opts.lqp_mu is not None)
