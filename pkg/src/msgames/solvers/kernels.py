"""Scalar best-response kernels.

Every pseudo-utility used by the solvers has a gradient in one agent's own
action ``z`` of the form

    g(z) = beta - gamma*z - sum_t kappa_t * exp(kappa_t*(z + r_t)/S_t) + rho/z

which is strictly decreasing whenever ``gamma > 0`` or an exponential or
``rho`` term is present. :func:`solve_structured` finds its root; the generic
:func:`best_response_scalar` handles arbitrary decreasing gradients.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

EXP_CAP = 700.0


def safe_exp(v: float) -> float:
    return math.exp(v if v < EXP_CAP else EXP_CAP)


class RootResult(NamedTuple):
    x: float
    iterations: int
    status: str  # "interior", "lo", "hi" or "not-monotone"

    @property
    def boundary(self) -> bool:
        return self.status in ("lo", "hi")


def best_response_linear(b: float, c: float, coupling_sum: float, lo: float, hi: float) -> RootResult:
    """Maximiser of ``(b + coupling_sum) z - c z^2`` over ``[lo, hi]``."""
    if c <= 0:
        raise ValueError("quadratic cost must be positive")
    z = (b + coupling_sum) / (2.0 * c)
    if z <= lo:
        return RootResult(lo, 0, "lo")
    if z >= hi:
        return RootResult(hi, 0, "hi")
    return RootResult(z, 0, "interior")


def best_response_scalar(
    grad: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    dgrad: Callable[[float], float] | None = None,
    x0: float | None = None,
    max_iter: int = 200,
) -> RootResult:
    """Root of a decreasing gradient on ``[lo, hi]`` by safeguarded Newton/bisection.

    Without ``dgrad`` the Newton step uses the secant slope of the current
    bracket. If ``grad(lo) < 0 < grad(hi)`` the objective is not concave and
    the endpoint with the larger objective (Simpson estimate of the integral of
    ``grad``) is returned with status ``"not-monotone"``.
    """
    g_lo, g_hi = grad(lo), grad(hi)
    if g_lo < 0 < g_hi:
        n = 33
        h = (hi - lo) / (n - 1)
        w = [1 if k in (0, n - 1) else (4 if k % 2 else 2) for k in range(n)]
        integral = h / 3 * sum(wk * grad(lo + k * h) for k, wk in enumerate(w))
        return RootResult(hi if integral > 0 else lo, n + 2, "not-monotone")
    if g_lo <= 0:
        return RootResult(lo, 2, "lo")
    if g_hi >= 0:
        return RootResult(hi, 2, "hi")
    a, b = lo, hi
    ga, gb = g_lo, g_hi
    x = 0.5 * (a + b) if x0 is None or not lo < x0 < hi else x0
    it = 2
    for _ in range(max_iter):
        gx = grad(x)
        it += 1
        if abs(gx) <= tol:
            break
        if gx > 0:
            a, ga = x, gx
        else:
            b, gb = x, gx
        d = dgrad(x) if dgrad is not None else (gb - ga) / (b - a)
        nx = x - gx / d if d < 0 else 0.5 * (a + b)
        if not a < nx < b:
            nx = 0.5 * (a + b)
        if nx == x or b - a <= 4e-16 * max(1.0, abs(a), abs(b)):
            break
        x = nx
    return RootResult(x, it, "interior")


def solve_structured(
    beta: float,
    gamma: float,
    exps: Sequence[tuple],
    rho: float,
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> RootResult:
    """Root of ``beta - gamma z - sum kappa e^{kappa (z+r)/S} + rho/z`` on ``[lo, hi]``.

    ``exps`` holds ``(kappa, r, S)`` triples. Linear problems are closed form;
    otherwise Newton is started at the linear estimate, which lies right of the
    root, so iterates decrease monotonically (the gradient is concave) and the
    bisection safeguard rarely triggers.
    """
    if not exps and rho == 0.0:
        if gamma <= 0.0:
            if beta > 0:
                return RootResult(hi, 0, "hi")
            return RootResult(lo, 0, "lo")
        z = beta / gamma
        if z <= lo:
            return RootResult(lo, 0, "lo")
        if z >= hi:
            return RootResult(hi, 0, "hi")
        return RootResult(z, 0, "interior")

    def g_and_d(z):
        g = beta - gamma * z
        d = -gamma
        for k, r, s in exps:
            e = k * safe_exp(k * (z + r) / s)
            g -= e
            d -= e * k / s
        if rho:
            g += rho / z
            d -= rho / (z * z)
        return g, d

    a, b = lo, hi
    it = 0
    if rho > 0 and lo <= 0:
        a = 0.0  # rho/z -> +inf at 0+, so the root is strictly positive
    else:
        ga, _ = g_and_d(a)
        it += 1
        if ga <= 0:
            return RootResult(lo, it, "lo")
    gb, _ = g_and_d(b)
    it += 1
    if gb >= 0:
        return RootResult(hi, it, "hi")
    x = beta / gamma if gamma > 0 else 0.5 * (a + b)
    if rho and gamma > 0:
        # positive root of beta - gamma z + rho/z = 0
        x = (beta + math.sqrt(beta * beta + 4 * gamma * rho)) / (2 * gamma)
    if not a < x < b:
        x = 0.5 * (a + b)
    for _ in range(max_iter):
        g, d = g_and_d(x)
        it += 1
        if abs(g) <= tol:
            break
        if g > 0:
            a = x
        else:
            b = x
        nx = x - g / d if d < 0 else 0.5 * (a + b)
        if not a < nx < b:
            nx = 0.5 * (a + b)
        if nx == x or b - a <= 4e-16 * max(1.0, abs(b)):
            break
        x = nx
    return RootResult(x, it, "interior")
