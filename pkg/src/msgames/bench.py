"""Experiment runner: generate instances, run solver matrices, write CSV rows."""

from __future__ import annotations

import csv
import io as _io
import os
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import certify_uniqueness
from .errors import ContractError
from .generators import GenSpec, generate
from .model import flatten
from .solvers import SolverOptions, solve_brd, solve_hh_brd, solve_ms_brd, solve_sh_brd

CSV_HEADER = (
    "instance_id", "seed", "size", "levels", "algorithm", "sweeps",
    "flops", "wall_ms", "converged", "residual_inf", "rho_gamma",
)
WORKERS_ENV = "MSGAMES_WORKERS"
DEFAULT_TIMEOUT = 300.0
ALGORITHMS = ("brd", "ms-brd", "sh-brd", "hh-brd")


def run_algorithm(game, algorithm: str, opts: SolverOptions, flat=None):
    alg = algorithm.lower()
    if alg == "brd":
        return solve_brd(flat if flat is not None else flatten(game), opts)
    if alg == "ms-brd":
        return solve_ms_brd(game, opts)
    if alg == "sh-brd":
        return solve_sh_brd(game, opts)
    if alg == "hh-brd":
        return solve_hh_brd(game, opts)
    raise ContractError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


_WARM = False


def warm_up():
    """Run every solver once on a tiny game so compilation is not timed."""
    global _WARM
    if _WARM:
        return
    for branching in ((3, 3), (2, 2, 2)):
        g = generate(GenSpec(branching, p_exist=0.5, utility_family="nonlinear", seed=0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for alg in ALGORITHMS:
                run_algorithm(g, alg, SolverOptions(max_sweeps=5, lqp_mu=0.5 if alg == "sh-brd" else None))
    _WARM = True


@dataclass
class Cell:
    gen: dict
    algorithms: tuple
    options: dict = field(default_factory=dict)
    seeds: tuple = (0,)
    repetitions: int = 1


@dataclass
class ExperimentConfig:
    cells: list
    timeout: float = DEFAULT_TIMEOUT
    output: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict) or not isinstance(d.get("cells"), list) or not d["cells"]:
            raise ContractError("config needs a non-empty 'cells' list")
        timeout = float(d.get("timeout", DEFAULT_TIMEOUT))
        if not timeout > 0:
            raise ContractError("timeout must be positive")
        reps_default = int(d.get("repetitions", 1))
        cells = []
        for t, c in enumerate(d["cells"]):
            if not isinstance(c, dict):
                raise ContractError(f"cells[{t}] must be an object")
            c = dict(c)
            algs = tuple(a.lower() for a in c.pop("algorithms", ("brd", "ms-brd", "sh-brd")))
            for a in algs:
                if a not in ALGORITHMS:
                    raise ContractError(f"cells[{t}]: unknown algorithm {a!r}")
            opts = dict(d.get("options", {}), **c.pop("options", {}))
            SolverOptions.from_dict(opts)
            if "seeds" in c:
                seeds = tuple(int(s) for s in c.pop("seeds"))
            else:
                seeds = (int(c.pop("seed", 0)),)
            reps = int(c.pop("repetitions", reps_default))
            if reps < 1:
                raise ContractError(f"cells[{t}]: repetitions must be >= 1")
            if "family" in c:
                c["utility_family"] = c.pop("family")
            GenSpec.from_dict(dict(c, seed=seeds[0]))
            cells.append(Cell(gen=c, algorithms=algs, options=opts, seeds=seeds, repetitions=reps))
        return cls(cells=cells, timeout=timeout, output=d.get("output"))


@dataclass
class ResultRow:
    instance_id: str
    seed: int
    size: str
    levels: int
    algorithm: str
    sweeps: int
    flops: int
    wall_ms: float
    converged: bool
    residual_inf: float
    rho_gamma: float

    def csv_values(self) -> list:
        return [
            self.instance_id, self.seed, self.size, self.levels, self.algorithm, self.sweeps,
            self.flops, f"{self.wall_ms:.3f}", str(bool(self.converged)).lower(),
            repr(float(self.residual_inf)), repr(float(self.rho_gamma)),
        ]


@dataclass
class InstanceResult:
    rows: list
    skipped: str | None = None
    max_pairwise_inf: float | None = None
    wall_samples: dict = field(default_factory=dict)


def _instance_id(spec: GenSpec) -> str:
    return f"{spec.size_label}-{spec.utility_family}-s{spec.seed}"


def run_instance(cell: Cell, seed: int, timeout: float) -> InstanceResult:
    warm_up()
    spec = GenSpec.from_dict(dict(cell.gen, seed=seed))
    game = generate(spec)
    flat = flatten(game)
    cert = certify_uniqueness(flat)
    iid = _instance_id(spec)
    if not cert.p_gamma:
        return InstanceResult(rows=[], skipped=f"{iid}: certification failed (rho_gamma={cert.spectral_radius_gamma:.4g})")
    opts = SolverOptions.from_dict(dict(cell.options, time_limit=timeout))
    rows, finals, samples = [], {}, {}
    for alg in cell.algorithms:
        walls, rep = [], None
        for _ in range(cell.repetitions):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = run_algorithm(game, alg, opts, flat)
            walls.append(timeout * 1000.0 if "timeout" in rep.flags else rep.wall_ms)
        samples[alg] = walls
        if rep.converged:
            finals[alg] = rep.x
        rows.append(ResultRow(
            instance_id=iid, seed=seed, size=spec.size_label, levels=spec.levels, algorithm=alg,
            sweeps=rep.sweeps, flops=rep.flops, wall_ms=float(statistics.median(walls)),
            converged=rep.converged, residual_inf=rep.residual_inf,
            rho_gamma=cert.spectral_radius_gamma,
        ))
    keys = list(finals)
    pair = max(
        (float(np.max(np.abs(finals[a] - finals[b]))) for i, a in enumerate(keys) for b in keys[i + 1:]),
        default=None,
    )
    return InstanceResult(rows=rows, max_pairwise_inf=pair, wall_samples=samples)


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ContractError(f"{WORKERS_ENV} must be an integer") from None


def run_experiment(config, workers: int | None = None, details: bool = False):
    """Rows sorted by ``(instance_id, algorithm)``; with ``details`` also a summary dict."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    jobs = [(cell, seed) for cell in cfg.cells for seed in cell.seeds]
    n = _workers(workers)
    if n == 1:
        results = [run_instance(c, s, cfg.timeout) for c, s in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(run_instance, [c for c, _ in jobs], [s for _, s in jobs], [cfg.timeout] * len(jobs)))
    rows = sorted((r for res in results for r in res.rows), key=lambda r: (r.instance_id, r.algorithm))
    if not details:
        return rows
    return rows, summarize(cfg, jobs, results)


def summarize(cfg: ExperimentConfig, jobs, results) -> dict:
    """Per cell and algorithm: mean, sample sd and median of flops, sweeps and wall time."""
    out = []
    for ci, cell in enumerate(cfg.cells):
        mine = [res for (c, _), res in zip(jobs, results) if c is cell]
        entry = {
            "cell": ci,
            "gen": cell.gen,
            "skipped": [r.skipped for r in mine if r.skipped],
            "max_pairwise_inf": max((r.max_pairwise_inf for r in mine if r.max_pairwise_inf is not None), default=None),
            "algorithms": {},
        }
        for alg in cell.algorithms:
            rows = [row for r in mine for row in r.rows if row.algorithm == alg]
            walls = [w for r in mine for w in r.wall_samples.get(alg, [])]
            if not rows:
                continue
            stats = {}
            for name, vals in (("flops", [r.flops for r in rows]), ("sweeps", [r.sweeps for r in rows]), ("wall_ms", walls)):
                stats[name] = {
                    "mean": float(statistics.fmean(vals)),
                    "sd": float(statistics.stdev(vals)) if len(vals) > 1 else 0.0,
                    "median": float(statistics.median(vals)),
                }
            stats["converged"] = sum(r.converged for r in rows)
            stats["runs"] = len(rows)
            entry["algorithms"][alg] = stats
        out.append(entry)
    return {"cells": out}


def rows_to_csv(rows, path=None) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_values())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def row_dicts(rows) -> list:
    return [asdict(r) for r in rows]
