import json
import math
from pathlib import Path

import numpy as np
import pytest

from stokeslab.cli import ConfigError, main, parse_config_file, resolve_config
from stokeslab.report import emit_plot, fmt, write_csv, write_json
from stokeslab.verification import RatioSeries


def make_series():
    rows = [{"h": 0.35, "lhs": 1.0, "rhs": 0.9, "ratio": 1.11},
            {"h": 0.175, "lhs": 1.1, "rhs": 0.95, "ratio": 1.16},
            {"h": 0.0875, "lhs": 1.2, "rhs": 1.0, "ratio": 1.2}]
    return RatioSeries("demo", rows)


def test_fmt_roundtrip():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(3) == "3"


def test_write_csv_deterministic(tmp_path):
    rows = [["a", 1.0 / 3.0, 2], ["b", math.pi, 3]]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, ["name", "x", "n"], rows)
    write_csv(p2, ["name", "x", "n"], rows)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().strip().split("\n")
    assert lines[0] == "name,x,n"
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0


def test_write_json_sorted(tmp_path):
    p = tmp_path / "r.json"
    write_json(p, {"b": np.float64(1.5), "a": {"z": np.int64(2), "y": [1, 2]}})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"')
    data = json.loads(text)
    assert data["b"] == 1.5


def test_emit_plot_deterministic(tmp_path):
    ser = make_series()
    p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_plot(ser, p1)
    emit_plot(ser, p2)
    assert p1.read_bytes() == p2.read_bytes()
    body = p1.read_text()
    assert body.count("<polyline") == 2  # data + fit overlay
    assert 'width="800" height="600"' in body


def test_emit_plot_needs_two_levels(tmp_path):
    ser = make_series()
    ser.rows = ser.rows[:1]
    with pytest.raises(ValueError):
        emit_plot(ser, tmp_path / "x.svg")


def test_parse_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
# comment
[section]
levels = [8, 16]
degree = 2
kappa = 4.5
scenario = "smooth"
flag = true
""")
    cfg = parse_config_file(p)
    assert cfg["levels"] == [8, 16]
    assert cfg["kappa"] == 4.5
    assert cfg["scenario"] == "smooth"
    assert cfg["flag"] is True


def test_missing_config_exit_code():
    assert main(["experiment", "--config", "does-not-exist.toml"]) == 2


def test_bad_level_exit_code(tmp_path):
    assert main(["solve", "--levels", "8,12", "--out", str(tmp_path)]) == 2


def test_cli_solve_and_null_velocity(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--out", str(out), "--levels", "8,16,32"]) == 0
    data = json.loads((out / "solve.json").read_text())
    assert data["pass"] is True
    assert abs(data["rate"] - 2.0) < 0.15
    out2 = tmp_path / "null"
    assert main(["solve", "--out", str(out2), "--levels", "8,16",
                 "--scenario", "null_velocity"]) == 0
    data = json.loads((out2 / "solve.json").read_text())
    assert max(r["velocity_linf"] for r in data["rows"]) <= 1e-10


def test_cli_experiment_single_kind(tmp_path):
    out = tmp_path / "exp"
    rc = main(["experiment", "--out", str(out), "--kind", "global_w1inf",
               "--levels", "8,16"])
    assert rc == 0
    assert (out / "experiment_global_w1inf.svg").exists()
    payload = json.loads((out / "experiments.json").read_text())
    key = next(iter(payload))
    assert payload[key]["verdict"] == "bounded"
