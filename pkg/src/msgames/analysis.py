"""Pseudo-gradient, the Upsilon/Gamma matrices and uniqueness certificates."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from .errors import CertificateError, ContractError
from .model import FlatGame, MultiScaleGame, flatten

P_MATRIX_CAP = 16
DENSE_EIG_LIMIT = 200
RHO_NOTE = (
    "rho_gamma is the spectral radius of |Gamma|; it equals ||Gamma||_2 only when Gamma is symmetric"
)


def pseudo_gradient(flat: FlatGame, x) -> np.ndarray:
    """``F_i(x) = -d u_i / d x_i``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (flat.n,):
        raise ContractError(f"x must have length {flat.n}")
    F = 2.0 * flat.c * x - flat.b - flat.W @ x
    on = flat.kappa > 0
    F[on] += flat.kappa[on] * np.exp(flat.kappa[on] * x[on])
    for t in flat.group_terms:
        F[t.members] += t.kappa * math.exp(t.kappa * x[t.members].sum() / t.scale)
    return F


def upsilon_matrix(flat: FlatGame, lo=None) -> sparse.csr_matrix:
    """``alpha_i`` on the diagonal, ``-|W_ij|`` off it.

    ``alpha_i = 2 c_i + kappa_i^2 exp(kappa_i lo_i)`` is the infimum of the own
    second derivative over the box, since ``kappa^2 e^{kappa x}`` increases in
    ``x``. Group exponential terms are left out: their cross derivatives grow
    without bound on large boxes, so they cannot enter a finite ``beta_ij``.
    """
    lo = flat.lo if lo is None else np.broadcast_to(np.asarray(lo, dtype=float), (flat.n,))
    alpha = 2.0 * flat.c + np.where(flat.kappa > 0, flat.kappa**2 * np.exp(flat.kappa * lo), 0.0)
    return (sparse.diags(alpha) - abs(flat.W)).tocsr()


def gamma_matrix(upsilon) -> sparse.csr_matrix:
    """``Gamma_ij = beta_ij / alpha_i`` with a zero diagonal."""
    U = sparse.csr_matrix(upsilon, dtype=float)
    alpha = U.diagonal()
    if np.any(alpha <= 0):
        raise CertificateError("degenerate diagonal: every alpha_i must be positive")
    off = U - sparse.diags(alpha)
    G = sparse.diags(1.0 / alpha) @ abs(off)
    G = sparse.csr_matrix(G)
    G.eliminate_zeros()
    return G


def spectral_radius(m, tol: float = 1e-10, max_iter: int = 10_000) -> tuple:
    """Spectral radius of ``|m|`` (or of a nonnegative ``LinearOperator``).

    Matrices up to ``DENSE_EIG_LIMIT`` rows use a dense eigen-solve. Larger
    ones use power iteration on ``|m| + I`` (same Perron vector, no
    periodicity trouble). Returns ``(rho, converged)``; without convergence
    ``rho`` is the Collatz-Wielandt upper bound of the last iterate.
    """
    if isinstance(m, LinearOperator):
        A = m  # caller guarantees a nonnegative operator
    else:
        A = abs(sparse.csr_matrix(m, dtype=float))
        if A.nnz == 0:
            return 0.0, True
        if A.shape[0] <= DENSE_EIG_LIMIT:
            return float(np.max(np.abs(np.linalg.eigvals(A.toarray())))), True
    n = A.shape[0]
    if n == 0:
        return 0.0, True
    v = np.full(n, 1.0 / n)
    est = math.inf
    for _ in range(max_iter):
        w = A @ v + v
        nrm = float(w.sum())
        w /= nrm
        if abs(nrm - est) <= tol and float(np.max(np.abs(w - v))) <= tol:
            return max(nrm - 1.0, 0.0), True
        v, est = w, nrm
    row_bound = float(np.max(A @ np.ones(n)))
    with np.errstate(divide="ignore", invalid="ignore"):
        cw = float(np.max((A @ v) / v))
    return (min(cw, row_bound) if np.isfinite(cw) else row_bound), False


def is_p_matrix(m, cap: int = P_MATRIX_CAP) -> bool:
    """Exact P-matrix test: every principal minor is positive."""
    M = m.toarray() if sparse.issparse(m) else np.asarray(m, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError("matrix must be square")
    n = M.shape[0]
    if n > cap:
        raise ContractError(f"dimension {n} exceeds cap {cap}; use sufficient conditions")
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            if np.linalg.det(M[np.ix_(idx, idx)]) <= 0:
                return False
    return True


def _dominance(U) -> tuple:
    U = sparse.csr_matrix(U)
    diag = np.abs(U.diagonal())
    off = np.asarray(abs(U).sum(axis=1)).ravel() - diag
    return diag, off


def is_sdd(U) -> bool:
    diag, off = _dominance(U)
    return bool(np.all(diag > off))


def is_wcdd(U) -> bool:
    """Weakly dominant rows, each linked by a nonzero path to a strictly dominant row."""
    diag, off = _dominance(U)
    if np.any(diag < off):
        return False
    strict = diag > off
    if not strict.any():
        return False
    if strict.all():
        return True
    pattern = sparse.csr_matrix(U, dtype=float).copy()
    pattern.setdiag(0.0)
    pattern.eliminate_zeros()
    # rows reaching a strict row = rows reachable from strict rows on the reversed graph
    rev = pattern.T.tocsr()
    seen = strict.copy()
    frontier = np.flatnonzero(strict)
    while len(frontier):
        nxt = np.unique(rev[frontier].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return bool(seen.all())


@dataclass
class UniquenessCertificate:
    upsilon: sparse.csr_matrix
    gamma: sparse.csr_matrix
    spectral_radius_gamma: float
    sdd: bool
    wcdd: bool
    p_gamma: bool
    p_upsilon_exact: bool | None
    n: int
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rho_gamma": float(self.spectral_radius_gamma),
            "sdd": bool(self.sdd),
            "wcdd": bool(self.wcdd),
            "p_gamma": bool(self.p_gamma),
            "p_upsilon_exact": None if self.p_upsilon_exact is None else bool(self.p_upsilon_exact),
            "n": int(self.n),
            "flags": list(self.flags),
            "note": RHO_NOTE,
        }


def certify_uniqueness(target, lo=None, cap: int = P_MATRIX_CAP) -> UniquenessCertificate:
    """Certificate for a flat game (a multi-scale game is flattened first)."""
    flat = flatten(target) if isinstance(target, MultiScaleGame) else target
    U = upsilon_matrix(flat, lo)
    G = gamma_matrix(U)
    rho, ok = spectral_radius(G)
    flags = [] if ok else ["power iteration did not converge; rho_gamma is the row-sum upper bound"]
    if flat.group_terms:
        flags.append("group exponential terms are not bounded in Upsilon")
    exact = is_p_matrix(U, cap) if flat.n <= cap else None
    return UniquenessCertificate(
        upsilon=U,
        gamma=G,
        spectral_radius_gamma=rho,
        sdd=is_sdd(U),
        wcdd=is_wcdd(U),
        p_gamma=rho < 1.0,
        p_upsilon_exact=exact,
        n=flat.n,
        flags=flags,
    )


@dataclass
class SviProblem:
    """Two separable operators tied by ``A x + y = 0``; ``A_ki = -1`` iff ``i`` is in group ``k``."""

    A: sparse.csr_matrix
    game: MultiScaleGame

    def f(self, x) -> np.ndarray:
        """Level-1 part: ``-d u^(1)_i / d x_i``."""
        g = self.game
        u = g.utility
        x = np.asarray(x, dtype=float)
        F = 2.0 * u.c * x - u.b - g.interaction(1) @ x
        on = u.kappa > 0
        F[on] += u.kappa[on] * np.exp(u.kappa[on] * x[on])
        return F

    def g(self, y) -> np.ndarray:
        """Level-2 part: ``-d u^(2)_k / d y_k``."""
        gm = self.game
        y = np.asarray(y, dtype=float)
        kap = gm.group_kappa(2)
        S = gm.leaf_counts(2)
        G = -gm.group_b(2) - gm.interaction(2) @ y
        on = kap > 0
        G[on] += kap[on] * np.exp(kap[on] * y[on] / S[on])
        return G

    def residual(self, x, y) -> float:
        return float(np.max(np.abs(self.A @ np.asarray(x, dtype=float) + np.asarray(y, dtype=float))))


def svi_assemble(game: MultiScaleGame) -> SviProblem:
    if game.L != 2:
        raise ContractError("the SVI form is defined for 2-level games")
    parent = game.ancestor_map(1, 2)
    n = game.n
    A = sparse.csr_matrix((-np.ones(n), (parent, np.arange(n))), shape=(game.population(2), n))
    return SviProblem(A=A, game=game)
