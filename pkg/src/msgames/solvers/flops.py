"""Closed-form flop model per sweep.

A best response with ``d`` coupling terms costs ``2d + 2``; aggregating a
group of ``s`` members costs ``s - 1``; each penalty adds two coupling terms;
a multiplier update costs 3 per agent. The count here assumes one-shot
(linear) best responses; the solvers count root-finding iterations as
``(2d + 6)`` each, so their totals are higher on nonlinear games.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..model import FlatGame, MultiScaleGame, flatten
from .staged import _Stage, _stage_split

ALGORITHMS = ("brd", "ms-brd", "sh-brd", "hh-brd")


def _brd_sweep(flat: FlatGame) -> int:
    deg = np.diff(flat.W.indptr)
    extra = sum(len(t.members) * (len(t.members) - 1) for t in flat.group_terms)
    return int((2 * deg + 2).sum() + extra)


def _staged_sweep(game: MultiScaleGame, kind: str, q) -> int:
    stages = [_Stage(game, a, b) for a, b in _stage_split(game, kind, q)]
    total = 0
    for s, st in enumerate(stages):
        d = (st.t_e - st.t_s).sum(axis=1) + 2 * (int(s > 0) + int(st.has_upper))
        total += int((2 * d + 2).sum()) + st.agg_cost
        if s > 0:
            total += 3 * st.n
    return total


def count_flops(game, algorithm: str, per_iteration: bool = True, sweeps: int | None = None, hh_split=None) -> int:
    """Model flops of one sweep, or of ``sweeps`` sweeps when ``per_iteration`` is false."""
    alg = algorithm.lower()
    if alg not in ALGORITHMS:
        raise ContractError(f"algorithm must be one of {ALGORITHMS}")
    if alg == "brd":
        per = _brd_sweep(flatten(game) if isinstance(game, MultiScaleGame) else game)
    else:
        if not isinstance(game, MultiScaleGame):
            raise ContractError(f"{alg} needs a multi-scale game")
        per = _staged_sweep(game, {"ms-brd": "ms", "sh-brd": "sh", "hh-brd": "hh"}[alg], hh_split)
    if per_iteration:
        return per
    if sweeps is None or sweeps < 0:
        raise ContractError("a sweep count is needed for a total")
    return per * int(sweeps)
