import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from msgames import io as gio
from msgames.bench import CSV_HEADER, ExperimentConfig, ResultRow, rows_to_csv, run_experiment
from msgames.cli import main
from msgames.errors import ContractError
from msgames.generators import GenSpec, generate
from msgames.model import build_game


def _csv_without_wall(text):
    rows = list(csv.reader(io.StringIO(text)))
    k = rows[0].index("wall_ms")
    return [r[:k] + r[k + 1:] for r in rows]


def test_result_row_fields_match_header():
    assert tuple(ResultRow.__dataclass_fields__) == CSV_HEADER


def test_table1_cell():
    cfg = {"cells": [{"size": "30x30", "family": "linear", "algorithms": ["brd", "ms-brd", "sh-brd"]}]}
    rows, summary = run_experiment(cfg, details=True)
    assert len(rows) == 3 and all(r.converged for r in rows)
    flops = {r.algorithm: r.flops for r in rows}
    assert flops["brd"] >= 10 * flops["ms-brd"]
    assert summary["cells"][0]["max_pairwise_inf"] <= 1e-4


def test_repetitions_same_flops_and_csv_reproducible():
    cfg = {"cells": [{"size": "8x6", "p_exist": 0.3, "seeds": [0, 1], "repetitions": 2,
                      "algorithms": ["brd", "ms-brd"], "options": {"epsilon": 1e-9}}]}
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert [r.flops for r in a] == [r.flops for r in b]
    assert _csv_without_wall(rows_to_csv(a)) == _csv_without_wall(rows_to_csv(b))
    # sorted by (instance_id, algorithm)
    assert [(r.instance_id, r.algorithm) for r in a] == sorted((r.instance_id, r.algorithm) for r in a)


def test_parallel_workers_match_serial():
    cfg = {"cells": [{"size": "6x5", "seeds": [0, 1, 2], "algorithms": ["ms-brd", "sh-brd"]}]}
    a = run_experiment(cfg, workers=1)
    b = run_experiment(cfg, workers=2)
    assert [(r.instance_id, r.algorithm, r.flops, r.sweeps) for r in a] == \
        [(r.instance_id, r.algorithm, r.flops, r.sweeps) for r in b]


@pytest.mark.parametrize(
    "cfg",
    [{}, {"cells": []}, {"cells": [{"size": "3x3", "algorithms": ["magic"]}]},
     {"cells": [{"size": "3x3", "repetitions": 0}]}, {"cells": [{"size": "3x3"}], "timeout": 0}],
)
def test_config_validation(cfg):
    with pytest.raises(ContractError):
        ExperimentConfig.from_dict(cfg)


# ---------------------------------------------------------------- CLI


def test_generate_then_solve(tmp_path, capsys):
    g = tmp_path / "g.json"
    assert main(["generate", "--size", "30x30", "--family", "linear", "--seed", "7", "-o", str(g)]) == 0
    cert = json.loads((tmp_path / "g.cert.json").read_text())
    assert cert["p_gamma"] and 0.7 <= cert["rho_gamma"] <= 0.75 + 1e-9
    capsys.readouterr()
    assert main(["solve", str(g), "--alg", "ms-brd", "--no-profile"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["converged"] is True and rep["equilibrium_residual"] <= 1e-5


@pytest.mark.parametrize("alg", ["brd", "sh-brd", "hh-brd"])
def test_solve_algorithms(tmp_path, alg):
    g = tmp_path / "g.json"
    gio.save_game(generate(GenSpec((5, 4), p_exist=0.4, seed=1)), g)
    out = tmp_path / "r.json"
    assert main(["solve", str(g), "--alg", alg, "--epsilon", "1e-8", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["converged"] is True


def test_require_certificate_fails(tmp_path, capsys):
    g = tmp_path / "g.json"
    # c = 0.25 with a unit edge gives rho(Gamma) = 2
    gio.save_game(build_game([[[0], [1]]], None, np.array([[0, 1.0], [1.0, 0]]), b=[1.0, 1.0], c=0.25), g)
    assert main(["solve", str(g), "--require-certificate"]) == 1
    err = capsys.readouterr().err
    assert "certification failed" in err and "Traceback" not in err


def test_analyze_detect_consistency(tmp_path, capsys):
    from msgames.model import flatten

    game = generate(GenSpec((4, 3), p_exist=0.6, seed=2))
    g, f = tmp_path / "g.json", tmp_path / "f.json"
    gio.save_game(game, g)
    gio.save_game(flatten(game), f)
    assert main(["analyze", str(g)]) == 0
    assert json.loads(capsys.readouterr().out)["p_gamma"] is True
    assert main(["detect", str(f), "--partition", "[[0,1,2,3],[4,5,6,7],[8,9,10,11]]"]) == 0
    assert json.loads(capsys.readouterr().out)["detected"] is True
    assert main(["consistency", str(g), "--c-group", "1,1,1"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert set(d) == {"c_star", "max_gap", "consistent"}


def test_bench_csv_header(tmp_path):
    cfg = tmp_path / "table1.json"
    cfg.write_text(json.dumps({"cells": [{"size": "5x4", "algorithms": ["brd", "ms-brd"]}]}))
    out = tmp_path / "out.csv"
    assert main(["bench", str(cfg), "-o", str(out), "--summary", str(tmp_path / "s.json")]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 3
    assert "cells" in json.loads((tmp_path / "s.json").read_text())


@pytest.mark.parametrize(
    "argv,code",
    [
        (["solve", "/nonexistent/g.json"], 2),
        (["frobnicate"], 1),
        (["generate", "--size", "3x3", "--p-exist", "2", "-o", "x.json"], 1),
        (["solve"], 1),
    ],
)
def test_exit_codes(argv, code, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    assert "Traceback" not in capsys.readouterr().err


def test_malformed_file_names_field(tmp_path, capsys):
    g = tmp_path / "g.json"
    d = gio.game_to_dict(generate(GenSpec((2, 2), seed=0)))
    d["c"] = "cheap"
    g.write_text(json.dumps(d))
    assert main(["analyze", str(g)]) == 2
    assert "c" in capsys.readouterr().err
    g.write_text("{")
    assert main(["analyze", str(g)]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "msgames", "analyze", str(tmp_path / "none.json")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "Traceback" not in r.stderr
