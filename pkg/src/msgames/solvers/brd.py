"""Plain best-response dynamics on a flat game."""

from __future__ import annotations

import math
import time

import numpy as np

from ..model import FlatGame, StrategyProfile
from .common import SolverOptions, SolverReport
from . import _nb


def solve_brd(flat: FlatGame, opts: SolverOptions | None = None) -> SolverReport:
    """Sweep all agents against the full flat adjacency until the step is below epsilon.

    Group exponential terms need the sum over the group; BRD has no aggregate
    cache, so the model charges ``|S| - 1`` flops per term per best response.
    """
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    n = flat.n
    gs = opts.sweep_mode == "gauss_seidel"
    x = np.zeros(n) if opts.x0 is None else np.asarray(opts.x0, dtype=float).copy()
    np.clip(x, flat.lo, flat.hi, out=x)

    W = flat.W
    ptr = W.indptr.astype(np.int64)
    idx = W.indices.astype(np.int64)
    w = W.data.astype(float)
    terms = flat.group_terms
    tptr = np.zeros(n + 1, dtype=np.int64)
    tptr[1:] = np.cumsum([len(t) for t in flat.terms_of])
    tids = np.array([t for ts in flat.terms_of for t in ts], dtype=np.int64)
    term_kap = np.array([t.kappa for t in terms], dtype=float)
    term_S = np.array([t.scale for t in terms], dtype=float)
    sizes = np.array([len(t.members) for t in terms], dtype=np.int64)
    extra = np.array([int((sizes[list(ts)] - 1).sum()) if ts else 0 for ts in flat.terms_of], dtype=np.int64)

    def term_sums(v):
        return np.array([v[t.members].sum() for t in terms]) if terms else np.zeros(0)

    sums = term_sums(x)
    gamma0 = 2.0 * flat.c
    flops = 0
    hits = 0
    norms = []
    iterates = [x.copy()] if opts.record_iterates else None
    converged = False
    change = math.inf
    sweeps = 0
    for sweep in range(1, opts.max_sweeps + 1):
        sweeps = sweep
        prev = x.copy()
        rd = x if gs else prev
        f, h = _nb.flat_sweep(
            x, rd, n, gs, ptr, idx, w, flat.b, gamma0, flat.kappa, flat.lo, flat.hi,
            tptr, tids, term_kap, term_S, sums, extra, opts.root_tol,
        )
        flops += f
        hits += h
        if terms:
            sums = term_sums(x)
        change = float(np.max(np.abs(x - prev))) if n else 0.0
        norms.append(change)
        if iterates is not None:
            iterates.append(x.copy())
        if change < opts.epsilon:
            converged = True
            break
        if not math.isfinite(change):
            break
        if opts.time_limit is not None and time.perf_counter() - t_start > opts.time_limit:
            break
    flags = [] if converged or math.isfinite(change) else ["diverged"]
    if not converged and opts.time_limit is not None and math.isfinite(change) and sweeps < opts.max_sweeps:
        flags.append("timeout")
    return SolverReport(
        algorithm="brd",
        converged=converged,
        sweeps=sweeps,
        flops=int(flops),
        final_profile=StrategyProfile(x, []),
        residual_inf=change,
        boundary_hits=hits,
        trajectory_norms=norms,
        wall_ms=1000.0 * (time.perf_counter() - t_start),
        flags=flags,
        iterates=iterates,
    )
