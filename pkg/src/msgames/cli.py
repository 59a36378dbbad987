"""Command-line entry point: ``python -m msgames <command> ...``.

Exit codes: 0 success, 1 contract error (bad arguments, failed
certification, invalid game), 2 I/O error (unreadable or malformed files).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io as gio
from .analysis import certify_uniqueness
from .bench import ALGORITHMS, ExperimentConfig, rows_to_csv, run_algorithm, run_experiment
from .consistency import check_consistency
from .errors import ContractError, GameFileError, MultiScaleError
from .generators import FAMILIES, GenSpec, generate, parse_size
from .model import FlatGame, MultiScaleGame, flatten, validate
from .solvers import SolverOptions, verify_equilibrium
from .structure import Failure, detect_structure

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        raise ContractError(message)


def _emit(obj: dict, path):
    text = json.dumps(obj, indent=1)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _read_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFileError(f"invalid JSON at line {exc.lineno} column {exc.colno}", str(path)) from None


def _penalties(items) -> dict:
    out = {}
    for item in items or []:
        try:
            lvl, val = item.split("=")
            out[int(lvl)] = float(val)
        except ValueError:
            raise ContractError(f"--h expects LEVEL=VALUE, got {item!r}") from None
    return out


def cmd_generate(args) -> int:
    spec = GenSpec(
        branching=parse_size(args.size),
        p_exist=args.p_exist,
        utility_family=args.family,
        kappa=args.kappa,
        rho_target=args.rho_target,
        seed=args.seed,
    )
    game = generate(spec)
    cert = certify_uniqueness(game)
    gio.save_game(game, args.output, meta={"generator": spec.to_dict()})
    cert_path = args.certificate or str(Path(args.output).with_suffix("")) + ".cert.json"
    _emit(cert.to_dict(), cert_path)
    print(f"wrote {args.output} (n={game.n}, L={game.L}) and {cert_path}", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    game = gio.load_any(args.game)
    if isinstance(game, MultiScaleGame):
        bad = validate(game)
        if bad:
            raise ContractError("invalid game: " + "; ".join(v.message for v in bad))
    alg = args.alg.lower()
    if isinstance(game, FlatGame) and alg != "brd":
        raise ContractError(f"{alg} needs a multi-scale game file; flat games support brd only")
    cert = certify_uniqueness(game)
    if args.require_certificate and not cert.p_gamma:
        raise ContractError(f"certification failed: rho_gamma = {cert.spectral_radius_gamma:.6g} >= 1")
    opts = SolverOptions(
        epsilon=args.epsilon,
        max_sweeps=args.max_sweeps,
        sweep_mode=args.sweep_mode,
        lqp_mu=args.lqp_mu,
        penalty_weights=_penalties(args.h),
        hh_split=args.hh_split,
        time_limit=args.time_limit,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        rep = run_algorithm(game, alg, opts)
    out = rep.to_dict(include_profile=not args.no_profile)
    out["warnings"] = [str(w.message) for w in caught]
    out["certificate"] = cert.to_dict()
    check = verify_equilibrium(game, rep.x, tol=10 * args.epsilon)
    out["equilibrium_residual"] = check.max_residual
    _emit(out, args.output)
    return EXIT_OK


def cmd_analyze(args) -> int:
    game = gio.load_any(args.game)
    _emit(certify_uniqueness(game).to_dict(), args.output)
    return EXIT_OK


def cmd_detect(args) -> int:
    game = gio.load_any(args.game)
    flat = flatten(game) if isinstance(game, MultiScaleGame) else game
    partition = json.loads(args.partition) if args.partition else None
    res = detect_structure(flat, partition=partition, tol=args.tol)
    if isinstance(res, Failure):
        _emit(res.to_dict(), args.output)
        return EXIT_OK
    V = res.top_adjacency.toarray()
    _emit({
        "detected": True,
        "partition": [list(map(int, g)) for g in res.levels[0].groups],
        "V": V.tolist(),
        "game": gio.game_to_dict(res),
    }, args.output)
    return EXIT_OK


def cmd_consistency(args) -> int:
    game = gio.load_game(args.game)
    c_group = None
    if args.c_group:
        src = args.c_group
        c_group = np.asarray(_read_json(src) if Path(src).exists() else [float(v) for v in src.split(",")], dtype=float)
    _emit(check_consistency(game, c_group, tol=args.tol).to_dict(), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = ExperimentConfig.from_dict(_read_json(args.config))
    rows, summary = run_experiment(cfg, workers=args.workers, details=True)
    out = args.output or cfg.output
    text = rows_to_csv(rows, out)
    if not out:
        print(text, end="")
    if args.summary:
        _emit(summary, args.summary)
    for cell in summary["cells"]:
        for reason in cell["skipped"]:
            print(f"skipped {reason}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _ArgParser(prog="msgames", description="Multi-scale network game solvers and benchmarks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgParser)

    g = sub.add_parser("generate", help="draw a random game and its certificate")
    g.add_argument("--size", required=True, help="e.g. 30x30 or 10^3 (bottom-up branching)")
    g.add_argument("--family", choices=FAMILIES, default="linear")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--p-exist", type=float, default=0.1)
    g.add_argument("--kappa", type=float, default=0.1)
    g.add_argument("--rho-target", type=float, default=0.75)
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--certificate", help="certificate path (default: <output>.cert.json)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="compute an equilibrium")
    s.add_argument("game")
    s.add_argument("--alg", choices=ALGORITHMS, default="ms-brd")
    s.add_argument("--epsilon", type=float, default=1e-6)
    s.add_argument("--max-sweeps", type=int, default=100_000)
    s.add_argument("--sweep-mode", choices=("gauss_seidel", "jacobi"), default="gauss_seidel")
    s.add_argument("--lqp-mu", type=float, default=None)
    s.add_argument("--h", action="append", metavar="LEVEL=VALUE", help="penalty weight for a level (repeatable)")
    s.add_argument("--hh-split", type=int, default=None)
    s.add_argument("--time-limit", type=float, default=None, help="seconds")
    s.add_argument("--require-certificate", action="store_true")
    s.add_argument("--no-profile", action="store_true", help="omit the final profile from the report")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("analyze", help="uniqueness certificate")
    a.add_argument("game")
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("detect", help="recover a 2-level structure from a flat game")
    d.add_argument("game")
    d.add_argument("--tol", type=float, default=1e-9)
    d.add_argument("--partition", help="JSON list of groups to verify instead of discovering one")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("consistency", help="consistent group costs and verdict")
    c.add_argument("game")
    c.add_argument("--c-group", help="comma-separated costs or a JSON file (default: c*)")
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_consistency)

    b = sub.add_parser("bench", help="run an experiment config and write CSV")
    b.add_argument("config")
    b.add_argument("-o", "--output")
    b.add_argument("--summary", help="write mean/sd/median per cell as JSON")
    b.add_argument("--workers", type=int, default=None, help="overrides MSGAMES_WORKERS")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except GameFileError as exc:
        print(f"error: malformed file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_IO
    except (MultiScaleError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # last resort: still no traceback for the user
        print(f"error: internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
