import csv
import io
import subprocess
import sys

import pytest

from slicewave.allocation import load_table
from slicewave.cli import build_id, main, parse_sweep

REQUIRED = {"scenario", "scenario_hash", "seed", "policy", "build"}


def _rows(capsys):
    return list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_solve_single(capsys):
    assert main(["solve", "single_mvno.json", "--policy", "random", "--bs-power", "33"]) == 0
    rows = _rows(capsys)
    assert REQUIRED <= set(rows[0])
    delays = [r for r in rows if r["level"] == "slice" and r["metric"] == "delay"]
    assert sorted(r["slice"] for r in delays) == ["1", "2", "3"]
    assert any(r["level"] == "solver" for r in rows)


def test_solve_baseline_tagged(capsys):
    assert main(["--mode", "solve", "--scenario", "toy_triple", "--policy",
                 "averaged-interference"]) == 0
    rows = _rows(capsys)
    assert {r["method"] for r in rows} == {"averaged-interference"}


def test_multi_needs_allow_large(capsys):
    assert main(["solve", "multi_mvno"]) == 2
    assert "--allow-large" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["solve", str(tmp_path / "none.json")]) == 3


def test_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"cells": []}')
    assert main(["solve", str(bad)]) == 1
    assert main(["explode", "toy_pair"]) == 1
    assert main(["solve", "toy_pair", "--lambda", "9=1.0"]) == 1


def test_sweep_one_point_rejected():
    assert main(["sweep", "toy_triple", "--sweep", "lambda_u=2:2:1"]) == 1


def test_sweep_decreasing_rejected():
    with pytest.raises(ValueError):
        parse_sweep("lambda_u=5:1:3")
    assert parse_sweep("bs_power_dbm=33:48:4")[1].tolist() == [33, 38, 43, 48]


def test_sweep_rows(capsys, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "toy_triple", "--sweep", "lambda_u=2:6:3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    iso = [r for r in rows if r["level"] == "isolation"]
    assert {r["metric"] for r in iso} == {"ADD", "VDD", "ATD", "VTD"}
    assert {r["reference"] for r in rows} == {"interference", "zero-interference", "isolation"}
    curve = [float(r["value"]) for r in rows if r["level"] == "network" and r["metric"] == "delay"
             and r["reference"] == "interference"]
    assert curve == sorted(curve)


def test_power_sweep(capsys):
    assert main(["sweep", "toy_pair", "--sweep", "bs_power_dbm=33:48:2"]) == 0
    xs = {r["x"] for r in _rows(capsys)}
    assert xs == {"33.0", "48.0"}


def test_complexity(capsys):
    assert main(["complexity", "multi_mvno"]) == 0
    rows = _rows(capsys)
    exact = {r["metric"]: int(r["value"]) for r in rows if r["method"] == "closed-form"}
    assert exact == {"proposed": 52_254_720, "exhaustive": 2_484_338_688}


def test_lookup_table_dump(tmp_path, capsys, toy_triple):
    out = tmp_path / "lt.swlt"
    assert main(["lookup-table", "toy_triple", "--policy", "interference-aware", "--seed", "3",
                 "--out", str(out)]) == 0
    rows = _rows(capsys)
    assert rows[0]["states"] == "64"
    t = load_table(out)
    assert t.seed == 3 and t.space.size == 64


def test_compare_columns(capsys):
    assert main(["compare", "toy_triple", "--flows", "3000", "--replications", "2"]) == 0
    rows = _rows(capsys)
    assert {"analytic", "des", "des_stderr", "baseline"} <= set(rows[0])
    assert all(r["des"] != "" for r in rows)


def test_simulate_rows(capsys):
    assert main(["simulate", "toy_pair", "--flows", "2000", "--replications", "2",
                 "--policy", "interference-aware"]) == 0
    rows = _rows(capsys)
    assert {"stderr", "build"} <= set(rows[0])
    assert main(["simulate", "toy_pair", "--policy", "exhaustive"]) == 1


def test_build_id():
    assert build_id().startswith("0.")


def test_entry_point():
    out = subprocess.run([sys.executable, "-m", "slicewave.cli", "complexity", "toy_pair"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "proposed" in out.stdout
