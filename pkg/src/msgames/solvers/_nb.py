"""Compiled sweep kernels (numba).

The pure-Python :func:`msgames.solvers.kernels.solve_structured` is the
reference; :func:`root` below is the same algorithm in nopython mode.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EXP_CAP = 700.0


@njit(cache=True)
def _gd(z, beta, gamma, ek, er, es, ne, rho):
    g = beta - gamma * z
    d = -gamma
    for t in range(ne):
        arg = ek[t] * (z + er[t]) / es[t]
        if arg > EXP_CAP:
            arg = EXP_CAP
        e = ek[t] * math.exp(arg)
        g -= e
        d -= e * ek[t] / es[t]
    if rho != 0.0:
        g += rho / z
        d -= rho / (z * z)
    return g, d


@njit(cache=True)
def root(beta, gamma, ek, er, es, ne, rho, lo, hi, tol):
    """Returns ``(x, iterations, status)`` with status 0 interior, 1 lo, 2 hi."""
    if ne == 0 and rho == 0.0:
        if gamma <= 0.0:
            if beta > 0.0:
                return hi, 0, 2
            return lo, 0, 1
        z = beta / gamma
        if z <= lo:
            return lo, 0, 1
        if z >= hi:
            return hi, 0, 2
        return z, 0, 0
    a = lo
    b = hi
    it = 0
    if rho > 0.0 and lo <= 0.0:
        a = 0.0
    else:
        ga, _ = _gd(a, beta, gamma, ek, er, es, ne, rho)
        it += 1
        if ga <= 0.0:
            return lo, it, 1
    gb, _ = _gd(b, beta, gamma, ek, er, es, ne, rho)
    it += 1
    if gb >= 0.0:
        return hi, it, 2
    if gamma > 0.0:
        x = beta / gamma
        if rho > 0.0:
            x = (beta + math.sqrt(beta * beta + 4.0 * gamma * rho)) / (2.0 * gamma)
    else:
        x = 0.5 * (a + b)
    if not (a < x < b):
        x = 0.5 * (a + b)
    for _ in range(100):
        g, d = _gd(x, beta, gamma, ek, er, es, ne, rho)
        it += 1
        if abs(g) <= tol:
            break
        if g > 0.0:
            a = x
        else:
            b = x
        if d < 0.0:
            nx = x - g / d
        else:
            nx = 0.5 * (a + b)
        if not (a < nx < b):
            nx = 0.5 * (a + b)
        if nx == x or b - a <= 4e-16 * max(1.0, abs(b)):
            break
        x = nx
    return x, it, 0


@njit(cache=True)
def stage_sweep(
    rd, wr, n, gs,
    t_k, t_s, t_e, t_bc, t_kap, t_S,
    nb_idx, nb_w,
    gamma0, lo, hi,
    has_low, low_b, low_g,
    has_up, up_idx, up_b, up_g,
    anc_up,
    use_lqp, mu, anchor, lqp_on,
    tol, npen,
):
    """One best-response pass over a stage's agents.

    Values of all levels in the stage live in one flat array; ``t_*`` describe,
    per agent and per level, the agent's ancestor (``t_k``), its neighbour range
    in ``nb_idx``/``nb_w`` and its utility constants. In Gauss-Seidel mode
    ``rd`` and ``wr`` are the same array and aggregates are updated in place.
    Returns ``(flops, boundary_hits)``.
    """
    nterm = t_k.shape[1]
    nagg = anc_up.shape[1]
    ek = np.empty(nterm)
    er = np.empty(nterm)
    es = np.empty(nterm)
    flops = 0
    hits = 0
    for j in range(n):
        zj = rd[j]
        beta = 0.0
        gamma = gamma0[j]
        ne = 0
        d = 2 * npen
        for o in range(nterm):
            beta += t_bc[j, o]
            s = t_s[j, o]
            e = t_e[j, o]
            acc = 0.0
            for p in range(s, e):
                acc += nb_w[p] * rd[nb_idx[p]]
            beta += acc
            d += e - s
            if t_kap[j, o] > 0.0:
                ek[ne] = t_kap[j, o]
                er[ne] = rd[t_k[j, o]] - zj
                es[ne] = t_S[j, o]
                ne += 1
        if has_low:
            beta += low_b[j]
            gamma += low_g[j]
        if has_up:
            u = up_idx[j]
            beta += up_b[j] - up_g[j] * (rd[u] - zj)
            gamma += up_g[j]
        rho = 0.0
        if use_lqp and lqp_on[j]:
            ap = anchor[j]
            if ap < 0.0:
                lqp_on[j] = False
            else:
                beta += (1.0 - mu) * ap
                gamma += 1.0
                rho = mu * ap * ap
                d += 2
        x, it, status = root(beta, gamma, ek, er, es, ne, rho, lo[j], hi[j], tol)
        if it == 0:
            flops += 2 * d + 2
        else:
            flops += (2 * d + 6) * it
        if status != 0:
            hits += 1
        if gs:
            delta = x - zj
            if delta != 0.0:
                wr[j] = x
                for o in range(nagg):
                    wr[anc_up[j, o]] += delta
        else:
            wr[j] = x
    return flops, hits


@njit(cache=True)
def flat_sweep(x, rd, n, gs, ptr, idx, w, b, gamma0, kap, lo, hi, tptr, tids, term_kap, term_S, sums, extra, tol):
    """One BRD pass over a flat game; ``sums`` caches group-term totals."""
    maxt = 1
    for i in range(n):
        if tptr[i + 1] - tptr[i] + 1 > maxt:
            maxt = tptr[i + 1] - tptr[i] + 1
    ek = np.empty(maxt)
    er = np.empty(maxt)
    es = np.empty(maxt)
    flops = 0
    hits = 0
    for i in range(n):
        xi = rd[i]
        beta = b[i]
        for p in range(ptr[i], ptr[i + 1]):
            beta += w[p] * rd[idx[p]]
        ne = 0
        if kap[i] > 0.0:
            ek[0] = kap[i]
            er[0] = 0.0
            es[0] = 1.0
            ne = 1
        for q in range(tptr[i], tptr[i + 1]):
            t = tids[q]
            ek[ne] = term_kap[t]
            er[ne] = sums[t] - xi
            es[ne] = term_S[t]
            ne += 1
        val, it, status = root(beta, gamma0[i], ek, er, es, ne, 0.0, lo[i], hi[i], tol)
        d = ptr[i + 1] - ptr[i]
        if it == 0:
            flops += 2 * d + 2 + extra[i]
        else:
            flops += (2 * d + 6) * it + extra[i]
        if status != 0:
            hits += 1
        if gs:
            delta = val - xi
            if delta != 0.0:
                x[i] = val
                for q in range(tptr[i], tptr[i + 1]):
                    sums[tids[q]] += delta
        else:
            x[i] = val
    return flops, hits
