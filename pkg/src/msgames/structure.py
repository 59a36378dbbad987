"""Recover a 2-level structure from a flat game.

Two conditions are checked for a candidate partition: every agent links to
all or none of the members of each other group, and the weight from one
group to another is the same for every member pair (within ``tol``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ContractError
from .model import ActionBox, FlatGame, HierarchyLevel, MultiScaleGame, UtilityParams

DEFAULT_TOL = 1e-9
DENSE_LIMIT = 4000


@dataclass
class Failure:
    """Why detection failed; ``agent`` and ``groups`` point at the first violating block."""

    reason: str
    agent: int | None = None
    groups: tuple | None = None
    partition: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "detected": False,
            "reason": self.reason,
            "agent": self.agent,
            "groups": None if self.groups is None else list(self.groups),
            "partition": [list(map(int, g)) for g in self.partition],
        }


def _dense(flat: FlatGame) -> np.ndarray:
    if flat.n > DENSE_LIMIT:
        raise ContractError(f"structure detection is limited to {DENSE_LIMIT} agents")
    return flat.W.toarray()


def _normalise(partition, n: int) -> list:
    groups = [np.asarray(sorted(int(i) for i in g), dtype=np.int64) for g in partition]
    seen = np.zeros(n, dtype=int)
    for g in groups:
        if len(g) == 0:
            raise ContractError("empty group in partition")
        if g.min() < 0 or g.max() >= n:
            raise ContractError("partition refers to an unknown agent")
        seen[g] += 1
    if np.any(seen != 1):
        raise ContractError("partition must cover every agent exactly once")
    groups.sort(key=lambda g: int(g[0]))
    return groups


def _verify(W: np.ndarray, groups: list, tol: float):
    """Return ``(V, None)`` or ``(None, Failure)``."""
    M = len(groups)
    V = np.zeros((M, M))
    for p, gp in enumerate(groups):
        for q, gq in enumerate(groups):
            if p == q:
                continue
            block = W[np.ix_(gp, gq)]
            vals = np.sort(block, axis=None)
            ref = float(vals[(len(vals) - 1) // 2])
            dev = np.abs(block - ref)
            if dev.max() > tol:
                r, _ = np.unravel_index(int(np.argmax(dev)), dev.shape)
                linked = np.abs(block) > tol
                what = "links to some but not all members" if linked.any() and not linked.all() else "non-constant weight"
                return None, Failure(
                    f"agent {int(gp[r])} ({what}) towards group {q} from group {p}",
                    agent=int(gp[r]),
                    groups=(p, q),
                    partition=groups,
                )
            V[p, q] = ref if abs(ref) > tol else 0.0
    return V, None


def _discover(W: np.ndarray, tol: float) -> list:
    """Group agents whose rows and columns agree outside their own group.

    For an anchor ``k`` and a candidate ``l``, every agent ``r`` where the rows
    or columns of ``k`` and ``l`` disagree must share their group. The smallest
    set closed under that rule is ``k``'s group candidate; a few candidates with
    the fewest disagreements are tried and the smallest proper closure wins.
    """
    n = W.shape[0]
    assigned = np.full(n, -1)
    groups = []
    for k in range(n):
        if assigned[k] >= 0:
            continue
        # differ[l, r]: agents k and l disagree at position r
        differ = (np.abs(W[k][None, :] - W) > tol) | (np.abs(W[:, k][None, :] - W.T) > tol)
        differ[:, k] = False
        np.fill_diagonal(differ, False)
        order = np.argsort(differ.sum(axis=1), kind="stable")
        best = None
        graph = sparse.csr_matrix(differ)
        tried = 0
        for l in order:
            if l == k or assigned[l] >= 0:
                continue
            tried += 1
            reach = csgraph.breadth_first_order(graph, int(l), directed=True, return_predecessors=False)
            closure = set(int(v) for v in reach) | {k}
            if len(closure) < n and (best is None or len(closure) < len(best)):
                if not np.any(assigned[list(closure)] >= 0):
                    best = closure
            if tried >= 5:
                break
        members = sorted(best) if best else [k]
        assigned[members] = len(groups)
        groups.append(members)
    return groups


def detect_structure(flat: FlatGame, partition=None, tol: float = DEFAULT_TOL):
    """Two-level game equivalent to ``flat``, or a :class:`Failure`."""
    if tol < 0:
        raise ContractError("tol must be >= 0")
    W = _dense(flat)
    n = flat.n
    if partition is None:
        groups = _normalise(_discover(W, tol), n)
        if len(groups) in (1, n):
            return Failure("no non-trivial group structure found", partition=groups)
    else:
        groups = _normalise(partition, n)
    V, failure = _verify(W, groups, tol)
    if failure is not None:
        return failure
    within = [sparse.csr_matrix(W[np.ix_(g, g)]) for g in groups]
    level = HierarchyLevel.from_groups(groups, within)
    M = len(groups)
    parent = level.parent_of
    group_b = np.zeros(M)
    group_kappa = np.zeros(M)
    for t in flat.group_terms:
        k = int(parent[t.members[0]])
        if sorted(t.members.tolist()) != groups[k].tolist():
            return Failure("group exponential term does not match a detected group", partition=groups)
        group_kappa[k] = t.kappa
    util = UtilityParams(b=flat.b.copy(), c=flat.c.copy(), a=flat.a.copy(), kappa=flat.kappa.copy(),
                         group_b=(group_b,), group_kappa=(group_kappa,))
    return MultiScaleGame(
        levels=(level,),
        top_adjacency=sparse.csr_matrix(V),
        utility=util,
        box=ActionBox(flat.lo.copy(), flat.hi.copy()),
    )
