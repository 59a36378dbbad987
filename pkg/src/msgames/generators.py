"""Random multi-scale game instances with a prescribed coupling strength."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .errors import ContractError
from .model import ActionBox, HierarchyLevel, MultiScaleGame, UtilityParams

FAMILIES = ("linear", "nonlinear", "mixed")

# independent streams; new ones must get new keys so old draws never move
_STREAM_EDGES, _STREAM_WEIGHTS, _STREAM_B = 0, 1, 2


@dataclass(frozen=True)
class GenSpec:
    """Instance recipe.

    ``branching`` is listed bottom-up: ``branching[0]`` agents per level-2
    group, ..., ``branching[-1]`` agents at the top level. ``(30, 30)`` is the
    30x30 two-level game with 900 level-1 agents; a one-entry tuple gives a
    flat game.
    """

    branching: tuple = (30, 30)
    p_exist: float = 0.1
    utility_family: str = "linear"
    kappa: float = 0.1
    rho_target: float = 0.75
    seed: int = 0
    box: tuple = (0.0, 1e6)

    def __post_init__(self):
        object.__setattr__(self, "branching", tuple(int(v) for v in self.branching))
        if not self.branching or any(v < 1 for v in self.branching):
            raise ContractError("branching entries must be >= 1")
        if not 0.0 <= self.p_exist <= 1.0:
            raise ContractError("p_exist must lie in [0, 1]")
        if not 0.0 < self.rho_target < 1.0:
            raise ContractError("rho_target must lie in (0, 1)")
        if self.utility_family not in FAMILIES:
            raise ContractError(f"utility_family must be one of {FAMILIES}")
        if self.kappa < 0:
            raise ContractError("kappa must be >= 0")

    @property
    def levels(self) -> int:
        return len(self.branching)

    @property
    def n(self) -> int:
        return math.prod(self.branching)

    @property
    def size_label(self) -> str:
        return "x".join(str(v) for v in self.branching)

    def to_dict(self) -> dict:
        return {
            "branching": list(self.branching),
            "p_exist": self.p_exist,
            "utility_family": self.utility_family,
            "kappa": self.kappa,
            "rho_target": self.rho_target,
            "seed": self.seed,
            "box": list(self.box),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        d = dict(d)
        if "size" in d:
            d["branching"] = parse_size(d.pop("size"))
        if "levels" in d:
            lv = int(d.pop("levels"))
            if lv != len(d.get("branching", cls.branching)):
                raise ContractError("levels disagrees with the branching length")
        return cls(**d)


def parse_size(text) -> tuple:
    """``"30x30"`` -> ``(30, 30)``; ``"10^3"`` -> ``(10, 10, 10)``."""
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    s = str(text).strip().lower()
    if "^" in s:
        base, exp = s.split("^")
        return (int(base),) * int(exp)
    return tuple(int(v) for v in s.replace("*", "x").split("x"))


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) % 2**64, spawn_key=(key,)))


def _random_blocks(n_groups: int, size: int, p: float, edges, weights) -> list:
    """One ``size x size`` zero-diagonal Bernoulli/U[0,1] matrix per group."""
    shape = (n_groups, size, size)
    mask = edges.random(shape) < p
    w = weights.random(shape)
    idx = np.arange(size)
    mask[:, idx, idx] = False
    return [sparse.csr_matrix(np.where(mask[g], w[g], 0.0)) for g in range(n_groups)]


def generate(spec: GenSpec, scale: bool = True) -> MultiScaleGame:
    """Draw a game; with ``scale`` the costs are set by :func:`scale_to_target_rho`."""
    edges = _stream(spec.seed, _STREAM_EDGES)
    weights = _stream(spec.seed, _STREAM_WEIGHTS)
    n = spec.n
    levels = []
    count = n
    for size in spec.branching[:-1]:
        n_groups = count // size
        groups = [np.arange(g * size, (g + 1) * size) for g in range(n_groups)]
        levels.append(HierarchyLevel.from_groups(groups, _random_blocks(n_groups, size, spec.p_exist, edges, weights)))
        count = n_groups
    top = _random_blocks(1, count, spec.p_exist, edges, weights)[0]

    b = _stream(spec.seed, _STREAM_B).random(n)
    L = spec.levels
    group_b = tuple(np.zeros(int(math.prod(spec.branching[l - 1:]))) for l in range(2, L + 1))
    kap1 = spec.kappa if spec.utility_family == "nonlinear" else 0.0
    kapg = spec.kappa if spec.utility_family in ("nonlinear", "mixed") else 0.0
    group_kappa = tuple(np.full(len(gb), kapg) for gb in group_b)
    util = UtilityParams(b=b, c=np.ones(n), a=np.zeros(n), kappa=np.full(n, kap1), group_b=group_b, group_kappa=group_kappa)
    game = MultiScaleGame(
        levels=tuple(levels),
        top_adjacency=top,
        utility=util,
        box=ActionBox.uniform(n, *spec.box),
    )
    return scale_to_target_rho(game, spec.rho_target) if scale else game


def coupling_row_sums(game: MultiScaleGame) -> np.ndarray:
    """Absolute row sums of the flattened adjacency, computed level by level."""
    r = np.zeros(game.n)
    for l in range(1, game.L + 1):
        g = abs(game.interaction(l))
        if g.nnz == 0:
            continue
        per = g @ game.leaf_counts(l) if l > 1 else np.asarray(g.sum(axis=1)).ravel()
        r += per[game.ancestor_map(1, l)]
    return r


def scale_to_target_rho(game: MultiScaleGame, rho_target: float, return_flags: bool = False):
    """Set ``c_i`` so that every row of the flat Gamma matrix sums to ``rho_target``.

    With ``alpha_i = 2 c_i + kappa_i^2 e^{kappa_i lo_i}`` the choice
    ``alpha_i = r_i / rho_target`` equalises the row sums, so for a nonnegative
    Gamma the spectral radius is exactly ``rho_target``. Rows without coupling
    get ``c_i = 0.5`` and are reported as decoupled.
    """
    if not 0.0 < rho_target < 1.0:
        raise ContractError("rho_target must lie in (0, 1)")
    r = coupling_row_sums(game)
    kap = game.utility.kappa
    curv = np.where(kap > 0, kap * kap * np.exp(kap * game.box.lo), 0.0)
    c = 0.5 * (r / rho_target - curv)
    weak = c <= 0
    c[weak] = r[weak] / (2.0 * rho_target)
    decoupled = r == 0
    c[decoupled] = 0.5
    new = replace(game, utility=replace(game.utility, c=c))
    if return_flags:
        return new, {"decoupled": np.flatnonzero(decoupled).tolist(), "curvature_ignored": np.flatnonzero(weak & ~decoupled).tolist()}
    return new
