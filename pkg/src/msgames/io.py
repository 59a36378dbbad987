"""JSON game files.

Multi-scale game::

    {
      "format": "msgames-game", "version": 1,
      "levels": L,
      "partitions": [[[members of group 0], ...], ...],    # levels 2..L
      "within_group_edges": [[[[i, j, w], ...], ...], ...], # local indices per group
      "top_level_edges": [[i, j, w], ...],                  # among level-L agents
      "b": [...], "c": [...], "a": [...], "kappa": [...],
      "group_b": [[...], ...], "group_kappa": [[...], ...], # levels 2..L, optional
      "boxes": {"lo": [...], "hi": [...]}                   # or [lo, hi] for all agents
    }

A flat game (``"format": "msgames-flat"``) has ``n``, ``edges`` and the same
per-agent vectors, plus optional ``group_terms`` of ``{members, kappa, scale}``.
Unknown fields raise a warning and are ignored.
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import GameFileError
from .model import ActionBox, FlatGame, GroupExpTerm, HierarchyLevel, MultiScaleGame, UtilityParams, make_flat

GAME_FORMAT = "msgames-game"
FLAT_FORMAT = "msgames-flat"
VERSION = 1
GAME_FIELDS = {
    "format", "version", "levels", "partitions", "within_group_edges", "top_level_edges",
    "b", "c", "a", "kappa", "group_b", "group_kappa", "boxes", "meta",
}
FLAT_FIELDS = {"format", "version", "n", "edges", "b", "c", "a", "kappa", "group_terms", "boxes", "meta"}


def _edges(m) -> list:
    coo = sparse.coo_matrix(m)
    order = np.lexsort((coo.col, coo.row))
    return [[int(coo.row[t]), int(coo.col[t]), float(coo.data[t])] for t in order]


def _boxes(lo, hi):
    if np.all(lo == lo[0]) and np.all(hi == hi[0]):
        return [float(lo[0]), float(hi[0])]
    return {"lo": lo.tolist(), "hi": hi.tolist()}


def game_to_dict(game: MultiScaleGame, meta: dict | None = None) -> dict:
    u = game.utility
    d = {
        "format": GAME_FORMAT,
        "version": VERSION,
        "levels": game.L,
        "partitions": [[list(map(int, g)) for g in h.groups] for h in game.levels],
        "within_group_edges": [[_edges(w) for w in h.within_group_adjacency] for h in game.levels],
        "top_level_edges": _edges(game.top_adjacency),
        "b": u.b.tolist(),
        "c": u.c.tolist(),
        "a": u.a.tolist(),
        "kappa": u.kappa.tolist(),
        "group_b": [game.group_b(l).tolist() for l in range(2, game.L + 1)],
        "group_kappa": [game.group_kappa(l).tolist() for l in range(2, game.L + 1)],
        "boxes": _boxes(game.box.lo, game.box.hi),
    }
    if meta:
        d["meta"] = meta
    return d


def flat_to_dict(flat: FlatGame, meta: dict | None = None) -> dict:
    d = {
        "format": FLAT_FORMAT,
        "version": VERSION,
        "n": flat.n,
        "edges": _edges(flat.W),
        "b": flat.b.tolist(),
        "c": flat.c.tolist(),
        "a": flat.a.tolist(),
        "kappa": flat.kappa.tolist(),
        "group_terms": [
            {"members": t.members.tolist(), "kappa": t.kappa, "scale": t.scale} for t in flat.group_terms
        ],
        "boxes": _boxes(flat.lo, flat.hi),
    }
    if meta:
        d["meta"] = meta
    return d


# ----------------------------------------------------------------------------- reading


def _warn_unknown(d: dict, known: set):
    for k in sorted(set(d) - known):
        warnings.warn(f"ignoring unknown field {k!r}", UserWarning, stacklevel=3)


def _vec(d: dict, name: str, n: int | None, default=None) -> np.ndarray:
    if name not in d:
        if default is None:
            raise GameFileError("missing required field", name)
        return np.full(n, float(default))
    v = d[name]
    if isinstance(v, (int, float)) and n is not None:
        v = [v] * n
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise GameFileError("expected a list of numbers", name) from None
    if arr.ndim != 1 or (n is not None and len(arr) != n):
        raise GameFileError(f"expected {n} numbers", name)
    if not np.all(np.isfinite(arr)):
        raise GameFileError("values must be finite", name)
    return arr


def _matrix(edges, size: int, where: str) -> sparse.csr_matrix:
    if not isinstance(edges, list):
        raise GameFileError("expected a list of [i, j, w] triplets", where)
    rows, cols, vals = [], [], []
    for t, e in enumerate(edges):
        if not (isinstance(e, (list, tuple)) and len(e) == 3):
            raise GameFileError(f"entry {t} is not an [i, j, w] triplet", where)
        i, j, w = e
        if not (isinstance(i, int) and isinstance(j, int)) or not (0 <= i < size and 0 <= j < size):
            raise GameFileError(f"entry {t} has indices outside 0..{size - 1}", where)
        try:
            w = float(w)
        except (TypeError, ValueError):
            raise GameFileError(f"entry {t} has a non-numeric weight", where) from None
        if not math.isfinite(w):
            raise GameFileError(f"entry {t} has a non-finite weight", where)
        rows.append(i)
        cols.append(j)
        vals.append(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


def _read_boxes(d: dict, n: int):
    bx = d.get("boxes", [0.0, 1e6])
    if isinstance(bx, list) and len(bx) == 2 and all(isinstance(v, (int, float)) for v in bx):
        return ActionBox.uniform(n, float(bx[0]), float(bx[1]))
    if isinstance(bx, dict):
        return ActionBox(_vec(bx, "lo", n), _vec(bx, "hi", n))
    raise GameFileError("expected [lo, hi] or {lo: [...], hi: [...]}", "boxes")


def game_from_dict(d: dict) -> MultiScaleGame:
    if not isinstance(d, dict):
        raise GameFileError("top level must be a JSON object")
    if d.get("format", GAME_FORMAT) != GAME_FORMAT:
        raise GameFileError(f"expected {GAME_FORMAT!r}", "format")
    _warn_unknown(d, GAME_FIELDS)
    b = _vec(d, "b", None)
    n = len(b)
    if n < 1:
        raise GameFileError("at least one agent is required", "b")
    parts = d.get("partitions", [])
    if not isinstance(parts, list):
        raise GameFileError("expected a list of partitions", "partitions")
    L = int(d.get("levels", len(parts) + 1))
    if L != len(parts) + 1:
        raise GameFileError(f"{L} levels need {L - 1} partitions, found {len(parts)}", "levels")
    within = d.get("within_group_edges", [[[] for _ in p] for p in parts])
    if not isinstance(within, list) or len(within) != len(parts):
        raise GameFileError("need one entry per partition", "within_group_edges")
    levels = []
    count = n
    for l, (groups, wl) in enumerate(zip(parts, within), start=2):
        where = f"partitions[{l - 2}]"
        if not isinstance(groups, list) or not all(isinstance(g, list) for g in groups):
            raise GameFileError("expected a list of member lists", where)
        members = [int(i) for g in groups for i in g]
        if sorted(members) != list(range(count)):
            raise GameFileError(f"groups must partition agents 0..{count - 1} of level {l - 1}", where)
        if not isinstance(wl, list) or len(wl) != len(groups):
            raise GameFileError("need one edge list per group", f"within_group_edges[{l - 2}]")
        mats = [_matrix(e, len(g), f"within_group_edges[{l - 2}][{k}]") for k, (g, e) in enumerate(zip(groups, wl))]
        levels.append(HierarchyLevel.from_groups(groups, mats))
        count = len(groups)
    top = _matrix(d.get("top_level_edges", []), count, "top_level_edges")
    pops = [len(p) for p in parts]
    gb = d.get("group_b", [[0.0] * m for m in pops])
    gk = d.get("group_kappa", [[0.0] * m for m in pops])
    for name, v in (("group_b", gb), ("group_kappa", gk)):
        if not isinstance(v, list) or len(v) != len(pops):
            raise GameFileError("need one list per level above 1", name)
    util = UtilityParams(
        b=b,
        c=_vec(d, "c", n),
        a=_vec(d, "a", n, 0.0),
        kappa=_vec(d, "kappa", n, 0.0),
        group_b=tuple(_vec({"v": v}, "v", m) for v, m in zip(gb, pops)),
        group_kappa=tuple(_vec({"v": v}, "v", m) for v, m in zip(gk, pops)),
    )
    return MultiScaleGame(levels=tuple(levels), top_adjacency=top, utility=util, box=_read_boxes(d, n))


def flat_from_dict(d: dict) -> FlatGame:
    if not isinstance(d, dict):
        raise GameFileError("top level must be a JSON object")
    if d.get("format") != FLAT_FORMAT:
        raise GameFileError(f"expected {FLAT_FORMAT!r}", "format")
    _warn_unknown(d, FLAT_FIELDS)
    b = _vec(d, "b", None)
    n = int(d.get("n", len(b)))
    if n != len(b):
        raise GameFileError(f"n={n} but b has {len(b)} entries", "n")
    W = _matrix(d.get("edges", []), n, "edges")
    terms = []
    for t, e in enumerate(d.get("group_terms", [])):
        try:
            terms.append(GroupExpTerm(np.asarray(e["members"], dtype=np.int64), float(e["kappa"]), float(e["scale"])))
        except (KeyError, TypeError, ValueError):
            raise GameFileError(f"entry {t} needs members, kappa and scale", "group_terms") from None
    box = _read_boxes(d, n)
    return make_flat(W, b, _vec(d, "c", n), _vec(d, "a", n, 0.0), _vec(d, "kappa", n, 0.0), box.lo, box.hi, terms)


def _load(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFileError(f"invalid JSON at line {exc.lineno} column {exc.colno}", str(path)) from None


def load_any(path):
    """A :class:`MultiScaleGame` or :class:`FlatGame`, depending on ``format``."""
    d = _load(path)
    if isinstance(d, dict) and d.get("format") == FLAT_FORMAT:
        return flat_from_dict(d)
    return game_from_dict(d)


def load_game(path) -> MultiScaleGame:
    return game_from_dict(_load(path))


def dump_json(obj: dict, path=None) -> str:
    text = json.dumps(obj, indent=1, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def save_game(game, path, meta: dict | None = None):
    d = flat_to_dict(game, meta) if isinstance(game, FlatGame) else game_to_dict(game, meta)
    dump_json(d, path)
