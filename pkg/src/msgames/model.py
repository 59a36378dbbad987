"""Multi-scale game representation.

An ``L``-level game is grounded in ``N`` level-1 agents. Level ``l+1`` agents
are disjoint groups of level-``l`` agents; each group carries a weighted
adjacency over its members, and the level-``L`` agents interact through a
single top-level adjacency. Every level-1 agent's utility is the sum of one
component per level, where the level-``l`` component only depends on the
aggregate (sum) actions of the level-``l`` agent it belongs to and that
agent's neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import ContractError, StructureError

DEFAULT_BOX = (0.0, 1e6)

#: Only the sum aggregator is implemented; the name is kept on each level so
#: that other aggregators can be slotted in later without a format change.
AGGREGATION_SUM = "sum"


def _csr(m, n: int) -> sparse.csr_matrix:
    if m is None:
        return sparse.csr_matrix((n, n))
    out = sparse.csr_matrix(m, dtype=float)
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


@dataclass(frozen=True)
class AgentRef:
    level: int
    index: int


@dataclass(frozen=True, eq=False)
class HierarchyLevel:
    """Partition of level-``l`` agents into level-``l+1`` groups.

    ``within_group_adjacency[k]`` is indexed by position inside ``groups[k]``.
    """

    parent_of: np.ndarray
    groups: tuple
    within_group_adjacency: tuple
    aggregation: str = AGGREGATION_SUM

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]], adjacency=None) -> "HierarchyLevel":
        groups = tuple(np.asarray(g, dtype=np.int64) for g in groups)
        n_children = int(sum(len(g) for g in groups))
        parent = np.full(n_children, -1, dtype=np.int64)
        for k, g in enumerate(groups):
            if len(g) and (g.min() < 0 or g.max() >= n_children):
                raise StructureError(f"group {k} references a member outside 0..{n_children - 1}")
            parent[g] = k
        if adjacency is None:
            adjacency = [None] * len(groups)
        if len(adjacency) != len(groups):
            raise StructureError("one within-group adjacency is required per group")
        mats = tuple(_csr(m, len(g)) for m, g in zip(adjacency, groups))
        return cls(parent_of=parent, groups=groups, within_group_adjacency=mats)

    @property
    def n_children(self) -> int:
        return len(self.parent_of)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def block_matrix(self) -> sparse.csr_matrix:
        """Within-group adjacencies placed on global child indices."""
        rows, cols, vals = [], [], []
        for g, w in zip(self.groups, self.within_group_adjacency):
            coo = w.tocoo()
            rows.append(g[coo.row])
            cols.append(g[coo.col])
            vals.append(coo.data)
        n = self.n_children
        if not rows:
            return sparse.csr_matrix((n, n))
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )


@dataclass(frozen=True, eq=False)
class UtilityParams:
    """Utility coefficients.

    Level-1 agent ``i``: ``a_i + b_i x + x (W x)_i - c_i x^2 - exp(kappa_i x)``
    (the exponential only when ``kappa_i > 0``). Level-``l`` agent ``k``
    (``l >= 2``, aggregate ``y``): ``b y + y (G y)_k - |S| exp(kappa y / |S|)``
    where ``|S|`` is the number of level-1 agents under ``k``.
    ``group_b[l-2]`` and ``group_kappa[l-2]`` hold the level-``l`` values.
    """

    b: np.ndarray
    c: np.ndarray
    a: np.ndarray | None = None
    kappa: np.ndarray | None = None
    group_b: tuple = ()
    group_kappa: tuple = ()

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        n = len(b)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", np.broadcast_to(np.asarray(self.c, dtype=float), (n,)).copy())
        for name in ("a", "kappa"):
            v = getattr(self, name)
            v = np.zeros(n) if v is None else np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
            object.__setattr__(self, name, v)
        object.__setattr__(self, "group_b", tuple(np.asarray(v, dtype=float) for v in self.group_b))
        object.__setattr__(self, "group_kappa", tuple(np.asarray(v, dtype=float) for v in self.group_kappa))


@dataclass(frozen=True, eq=False)
class ActionBox:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def uniform(cls, n: int, lo: float = DEFAULT_BOX[0], hi: float = DEFAULT_BOX[1]) -> "ActionBox":
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))


@dataclass(frozen=True, eq=False)
class MultiScaleGame:
    """Immutable ``L``-level game; ``levels[l-1]`` groups level-``l`` agents."""

    levels: tuple
    top_adjacency: sparse.csr_matrix
    utility: UtilityParams
    box: ActionBox

    @property
    def L(self) -> int:
        return len(self.levels) + 1

    @property
    def n(self) -> int:
        return len(self.utility.b)

    @cached_property
    def populations(self) -> tuple:
        """``populations[l-1]`` is the number of level-``l`` agents."""
        return (self.n,) + tuple(h.n_groups for h in self.levels)

    def population(self, level: int) -> int:
        self._check_level(level)
        return self.populations[level - 1]

    def _check_level(self, level: int):
        if not 1 <= level <= self.L:
            raise StructureError(f"level {level} outside 1..{self.L}")

    def interaction(self, level: int) -> sparse.csr_matrix:
        """Adjacency among level-``level`` agents (block diagonal below the top)."""
        return self._interactions[level - 1]

    @cached_property
    def _interactions(self) -> tuple:
        mats = [h.block_matrix() for h in self.levels]
        mats.append(self.top_adjacency)
        return tuple(mats)

    @cached_property
    def _up_maps(self) -> tuple:
        # _up_maps[l-1][m-1] maps level-l indices to their level-m ancestor (m >= l)
        maps = []
        for l in range(1, self.L + 1):
            row = [None] * self.L
            cur = np.arange(self.populations[l - 1])
            row[l - 1] = cur
            for m in range(l + 1, self.L + 1):
                cur = self.levels[m - 2].parent_of[cur]
                row[m - 1] = cur
            maps.append(tuple(row))
        return tuple(maps)

    def ancestor_map(self, from_level: int, to_level: int) -> np.ndarray:
        """Index of the level-``to_level`` ancestor of every level-``from_level`` agent."""
        self._check_level(from_level)
        self._check_level(to_level)
        if to_level < from_level:
            raise ContractError("ancestor level must not be below the source level")
        return self._up_maps[from_level - 1][to_level - 1]

    def leaf_counts(self, level: int) -> np.ndarray:
        """Number of level-1 agents under each level-``level`` agent."""
        return np.bincount(self.ancestor_map(1, level), minlength=self.population(level)).astype(float)

    def members(self, level: int, index: int, of_level: int = 1) -> np.ndarray:
        """Level-``of_level`` agents contained in level-``level`` agent ``index``."""
        anc = self.ancestor_map(of_level, level)
        return np.flatnonzero(anc == index)

    def group_b(self, level: int) -> np.ndarray:
        if level < 2:
            raise ContractError("group benefits exist for levels >= 2")
        gb = self.utility.group_b
        return gb[level - 2] if len(gb) >= level - 1 else np.zeros(self.population(level))

    def group_kappa(self, level: int) -> np.ndarray:
        if level < 2:
            raise ContractError("group exponential costs exist for levels >= 2")
        gk = self.utility.group_kappa
        return gk[level - 2] if len(gk) >= level - 1 else np.zeros(self.population(level))

    @property
    def is_linear(self) -> bool:
        """True when no exponential cost term is active at any level."""
        if np.any(self.utility.kappa > 0):
            return False
        return not any(np.any(self.group_kappa(l) > 0) for l in range(2, self.L + 1))


def build_game(
    partitions: Sequence[Sequence[Sequence[int]]],
    within: Sequence[Sequence] | None,
    top,
    b,
    c,
    a=None,
    kappa=None,
    group_b=None,
    group_kappa=None,
    box: ActionBox | None = None,
) -> MultiScaleGame:
    """Assemble a game from per-level partitions and adjacency matrices.

    ``partitions[l]`` lists the groups of level-``l+1`` agents (member indices);
    ``within[l][k]`` is the adjacency inside group ``k`` of that partition.
    """
    if within is None:
        within = [None] * len(partitions)
    levels = tuple(
        HierarchyLevel.from_groups(p, w) for p, w in zip(partitions, within)
    )
    n_top = levels[-1].n_groups if levels else len(np.atleast_1d(b))
    util = UtilityParams(
        b=b,
        c=c,
        a=a,
        kappa=kappa,
        group_b=tuple(group_b or ()),
        group_kappa=tuple(group_kappa or ()),
    )
    if box is None:
        box = ActionBox.uniform(len(util.b))
    return MultiScaleGame(levels=levels, top_adjacency=_csr(top, n_top), utility=util, box=box)


@dataclass
class StrategyProfile:
    """Level-1 actions plus cached aggregates (``aggregates[l-2]`` is level ``l``)."""

    x1: np.ndarray
    aggregates: list = field(default_factory=list)

    def level(self, level: int) -> np.ndarray:
        return self.x1 if level == 1 else self.aggregates[level - 2]

    def copy(self) -> "StrategyProfile":
        return StrategyProfile(self.x1.copy(), [a.copy() for a in self.aggregates])


def new_profile(game: MultiScaleGame, x1=None) -> StrategyProfile:
    """Profile with ``x1`` (default zeros) clamped into the boxes, aggregates refreshed."""
    x = np.zeros(game.n) if x1 is None else np.asarray(x1, dtype=float).copy()
    np.clip(x, game.box.lo, game.box.hi, out=x)
    return refresh_aggregates(StrategyProfile(x), game)


def refresh_aggregates(profile: StrategyProfile, game: MultiScaleGame) -> StrategyProfile:
    aggs = []
    child = profile.x1
    for h in game.levels:
        child = np.bincount(h.parent_of, weights=child, minlength=h.n_groups)
        aggs.append(child)
    profile.aggregates = aggs
    return profile


def aggregate(game: MultiScaleGame, profile: StrategyProfile, group: AgentRef) -> float:
    """Sum of the child-level values of a level >= 2 agent."""
    if group.level < 2 or group.level > game.L:
        raise StructureError(f"no group at level {group.level}")
    h = game.levels[group.level - 2]
    if not 0 <= group.index < h.n_groups:
        raise StructureError(f"level-{group.level} group {group.index} does not exist")
    return float(profile.level(group.level - 1)[h.groups[group.index]].sum())


def level_components(game: MultiScaleGame, profile: StrategyProfile, level: int) -> np.ndarray:
    """Utility component of every level-``level`` agent."""
    x = profile.level(level)
    coupling = game.interaction(level) @ x
    if level == 1:
        u = game.utility.a + game.utility.b * x + x * coupling - game.utility.c * x * x
        kap = game.utility.kappa
        on = kap > 0
        u[on] -= np.exp(kap[on] * x[on])
        return u
    u = game.group_b(level) * x + x * coupling
    kap = game.group_kappa(level)
    on = kap > 0
    if np.any(on):
        s = game.leaf_counts(level)
        u[on] -= s[on] * np.exp(kap[on] * x[on] / s[on])
    return u


def utilities(game: MultiScaleGame, profile: StrategyProfile) -> np.ndarray:
    """Utility of every level-1 agent (aggregates must be fresh)."""
    total = level_components(game, profile, 1)
    for l in range(2, game.L + 1):
        total = total + level_components(game, profile, l)[game.ancestor_map(1, l)]
    return total


def utility(game: MultiScaleGame, profile: StrategyProfile, agent) -> float:
    if isinstance(agent, AgentRef):
        if agent.level != 1:
            raise ContractError("utilities are defined for level-1 agents only")
        agent = agent.index
    if not 0 <= agent < game.n:
        raise StructureError(f"level-1 agent {agent} does not exist")
    return float(utilities(game, profile)[agent])


# --------------------------------------------------------------------------- flat game


@dataclass(frozen=True, eq=False)
class GroupExpTerm:
    """``-scale * exp(kappa * sum(x[members]) / scale)`` shared by ``members``."""

    members: np.ndarray
    kappa: float
    scale: float


@dataclass(frozen=True, eq=False)
class FlatGame:
    """Conventional network game; ``W`` has zero diagonal.

    The additive constant ``d_i`` produced by flattening depends only on the
    other agents' actions, so it is not stored here; see :func:`flat_constant`.
    """

    W: sparse.csr_matrix
    b: np.ndarray
    c: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    group_terms: tuple = ()

    @property
    def n(self) -> int:
        return len(self.b)

    @cached_property
    def terms_of(self) -> tuple:
        out = [[] for _ in range(self.n)]
        for t, term in enumerate(self.group_terms):
            for i in term.members:
                out[i].append(t)
        return tuple(tuple(v) for v in out)

    @property
    def is_linear(self) -> bool:
        return not np.any(self.kappa > 0) and not self.group_terms


def make_flat(W, b, c, a=None, kappa=None, lo=None, hi=None, group_terms=()) -> FlatGame:
    b = np.asarray(b, dtype=float)
    n = len(b)
    full = lambda v, d: np.full(n, d, dtype=float) if v is None else np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    W = _csr(W, n)
    W.setdiag(0.0)
    W.eliminate_zeros()
    return FlatGame(
        W=W,
        b=b,
        c=full(c, 0.0),
        a=full(a, 0.0),
        kappa=full(kappa, 0.0),
        lo=full(lo, DEFAULT_BOX[0]),
        hi=full(hi, DEFAULT_BOX[1]),
        group_terms=tuple(group_terms),
    )


def flatten(game: MultiScaleGame) -> FlatGame:
    """Spread every group-level edge onto all pairs of level-1 members.

    Level-1 agents ``i`` and ``j`` interact through exactly one level: the one
    just below the lowest level where they share an ancestor.
    """
    n = game.n
    rows, cols, vals = [], [], []
    for l in range(1, game.L + 1):
        coo = game.interaction(l).tocoo()
        if coo.nnz == 0:
            continue
        if l == 1:
            rows.append(coo.row)
            cols.append(coo.col)
            vals.append(coo.data)
            continue
        anc = game.ancestor_map(1, l)
        order = np.argsort(anc, kind="stable")
        counts = np.bincount(anc, minlength=game.population(l))
        starts = np.concatenate(([0], np.cumsum(counts)))
        for p, q, w in zip(coo.row, coo.col, coo.data):
            mp = order[starts[p]:starts[p + 1]]
            mq = order[starts[q]:starts[q + 1]]
            rr, cc = np.meshgrid(mp, mq, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(np.full(rr.size, w))
    if rows:
        W = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
    else:
        W = sparse.csr_matrix((n, n))
    b = game.utility.b.copy()
    terms = []
    for l in range(2, game.L + 1):
        anc = game.ancestor_map(1, l)
        b += game.group_b(l)[anc]
        kap = game.group_kappa(l)
        sizes = game.leaf_counts(l)
        for k in np.flatnonzero(kap > 0):
            terms.append(GroupExpTerm(np.flatnonzero(anc == k), float(kap[k]), float(sizes[k])))
    u = game.utility
    return make_flat(W, b, u.c, u.a, u.kappa, game.box.lo, game.box.hi, terms)


def flat_utility(flat: FlatGame, x, agent: int | None = None):
    """Utility in the flat game, excluding the bookkeeping constant ``d_i``."""
    x = np.asarray(x, dtype=float)
    u = flat.a + flat.b * x + x * (flat.W @ x) - flat.c * x * x
    on = flat.kappa > 0
    u[on] -= np.exp(flat.kappa[on] * x[on])
    for term in flat.group_terms:
        y = x[term.members].sum()
        u[term.members] -= term.scale * math.exp(term.kappa * y / term.scale)
    return u if agent is None else float(u[agent])


def flat_constant(game: MultiScaleGame, x1) -> np.ndarray:
    """``d_i``: the part of the multi-scale utility that does not involve ``x_i``.

    For each level ``l >= 2`` with ancestor ``k``, the component
    ``y_k (b_k + (G y)_k)`` splits into ``x_i (b_k + (G y)_k)`` (kept by the
    flat game) and ``(y_k - x_i)(b_k + (G y)_k)``.
    """
    profile = refresh_aggregates(StrategyProfile(np.asarray(x1, dtype=float)), game)
    d = np.zeros(game.n)
    for l in range(2, game.L + 1):
        y = profile.level(l)
        marginal = game.group_b(l) + game.interaction(l) @ y
        anc = game.ancestor_map(1, l)
        d += (y[anc] - profile.x1) * marginal[anc]
    return d


# --------------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate(game: MultiScaleGame) -> list:
    """Check structural and parameter invariants; empty list when valid."""
    out = []
    n = game.n
    u = game.utility
    if n < 1:
        out.append(Violation("empty", "the game has no level-1 agents"))
        return out
    for name in ("c", "a", "kappa"):
        if len(getattr(u, name)) != n:
            out.append(Violation("shape", f"{name} has length {len(getattr(u, name))}, expected {n}"))
    if len(u.c) == n and np.any(~(u.c > 0)):
        bad = np.flatnonzero(~(u.c > 0))
        out.append(Violation("nonpositive quadratic cost", f"c <= 0 for agents {bad[:10].tolist()}"))
    if np.any(u.kappa < 0):
        out.append(Violation("negative kappa", "level-1 exponential coefficients must be >= 0"))
    lo, hi = game.box.lo, game.box.hi
    if len(lo) != n or len(hi) != n:
        out.append(Violation("shape", "action boxes must have one entry per level-1 agent"))
    elif not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        out.append(Violation("unbounded box", "action boxes must be finite"))
    elif np.any(lo >= hi):
        out.append(Violation("empty box", "every box needs lo < hi"))
    n_child = n
    for depth, h in enumerate(game.levels):
        lvl = depth + 2
        seen = np.zeros(n_child, dtype=int)
        for g in h.groups:
            g = np.asarray(g)
            if len(g) and (g.min() < 0 or g.max() >= n_child):
                out.append(Violation("partition out of range", f"level {lvl} group references a missing member"))
                continue
            np.add.at(seen, g, 1)
        if np.any(seen == 0):
            out.append(
                Violation(
                    "partition not covering",
                    f"level {lvl}: level-{lvl - 1} agents {np.flatnonzero(seen == 0)[:10].tolist()} belong to no group",
                )
            )
        if np.any(seen > 1):
            out.append(Violation("partition overlapping", f"level {lvl}: some agents belong to several groups"))
        if any(len(g) == 0 for g in h.groups):
            out.append(Violation("empty group", f"level {lvl} has an empty group"))
        if len(h.parent_of) == n_child and np.all(seen == 1):
            for k, g in enumerate(h.groups):
                if np.any(h.parent_of[g] != k):
                    out.append(Violation("parent mismatch", f"level {lvl}: parent_of disagrees with group {k}"))
                    break
        for k, (g, w) in enumerate(zip(h.groups, h.within_group_adjacency)):
            out.extend(_check_adjacency(w, len(g), f"level {lvl} group {k}"))
        if lvl - 2 < len(u.group_kappa) and np.any(u.group_kappa[lvl - 2] < 0):
            out.append(Violation("negative kappa", f"level {lvl} exponential coefficients must be >= 0"))
        n_child = h.n_groups
    out.extend(_check_adjacency(game.top_adjacency, n_child, "top level"))
    return out


def _check_adjacency(w, size, where) -> list:
    out = []
    if w.shape != (size, size):
        return [Violation("adjacency shape", f"{where}: adjacency is {w.shape}, expected {(size, size)}")]
    if np.any(w.diagonal() != 0):
        out.append(Violation("adjacency diagonal", f"{where}: adjacency has a nonzero diagonal"))
    if w.nnz and np.any(w.data < 0):
        out.append(Violation("negative weight", f"{where}: adjacency has negative weights"))
    return out
