"""Experiment specs, result tables, the runner pool and the command line."""

import csv
import io

import pytest

from kpzfp.errors import InvalidConfigError
from kpzfp.experiments_cli import cli
from kpzfp.experiments_cli.runners import parse_barrier, run_rows
from kpzfp.experiments_cli.spec import ExperimentSpec, parse_spec, parse_value
from kpzfp.experiments_cli.table import ResultTable, emit_plotdata

SPEC = """
[experiment]
name = demo
op = schuetz
seed = 3
tol = 1e-9

[params]
t = 0.5, 1.0
reach = 30
"""


def test_parse_value_types():
    assert parse_value("3") == 3
    assert parse_value("1e-3") == 1e-3
    assert parse_value("true") is True
    assert parse_value("inf") == float("inf")
    assert parse_value("a, b") == ["a", "b"]
    assert parse_value("1, 2.5") == [1, 2.5]


def test_parse_spec_and_overrides():
    s = parse_spec(SPEC)
    assert (s.name, s.op, s.seed, s.tol) == ("demo", "schuetz", 3, 1e-9)
    assert s.as_list("t") == [0.5, 1.0] and s.get("reach") == 30
    o = s.with_overrides(seed=9, threads=4)
    assert o.seed == 9 and o.threads == 4 and o.digest == s.digest
    assert parse_spec(SPEC.replace("seed = 3", "seed = 4")).digest != s.digest


@pytest.mark.parametrize("text", ["[params]\nx = 1\n", "[experiment]\nname = x\n",
                                  "[experiment]\nop = a\n[extra]\n", "[experiment]\nop = a\nseed = x\n",
                                  "not an ini"])
def test_invalid_specs(text):
    with pytest.raises(InvalidConfigError):
        parse_spec(text)


def test_table_csv_and_plotdata(tmp_path):
    t = ResultTable("e", "h", 1)
    t.append("ok", 1.0, x=0.5, value=0.1)
    t.append("fail", 2.0, x=1.0)
    text = t.to_csv(tmp_path / "t.csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0])[:6] == ["schema", "experiment", "spec_hash", "seed", "row", "status"]
    assert list(rows[0])[-1] == "runtime_ms"
    assert rows[1]["value"] == "" and not t.ok and len(t.failures()) == 1
    assert emit_plotdata(t, ["x", "value"]) == "# x value\n0.5 0.1\n"
    with pytest.raises(InvalidConfigError):
        emit_plotdata(t, ["nope"])
    with pytest.raises(InvalidConfigError):
        emit_plotdata(t, [])


def test_run_rows_order_errors_and_timeout():
    import time
    from kpzfp.errors import DomainError

    spec = ExperimentSpec("r", "x", threads=3, timeout=0.5)

    def boom():
        raise DomainError("bad")

    tasks = [({"i": 0}, lambda: {"status": "ok", "value": 1.0}),
             ({"i": 1}, boom),
             ({"i": 2}, lambda: (time.sleep(1.5), {"status": "ok"})[1]),
             ({"i": 3}, lambda: {"status": "ok", "value": 3.0})]
    t = run_rows(spec, ResultTable("r", "", 0), tasks)
    assert [r["i"] for r in t.rows] == [0, 1, 2, 3]
    assert [r["status"] for r in t.rows] == ["ok", "error:DomainError", "timeout", "ok"]


def test_parse_barrier():
    assert parse_barrier("narrow-wedge").points == ((0.0, 0.0),)
    assert parse_barrier("flat:0.5").value == 0.5
    assert parse_barrier("wedges:0/0;1/-0.5").points == ((0.0, 0.0), (1.0, -0.5))
    with pytest.raises(Exception):
        parse_barrier("zigzag")


def test_cli_exact_all_routes(capsys):
    assert cli.main(["exact", "--initial", "3,1,-2", "--t", "1.3", "--events", "1:4,2:3",
                     "--route", "all"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    vals = [float(r["value"]) for r in rows]
    assert len(vals) == 3 and max(vals) - min(vals) < 1e-9


def test_cli_simulate_and_fixed_point(tmp_path):
    assert cli.main(["simulate", "--initial", "step", "--t", "1", "--events", "1:0",
                     "--samples", "2000", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "simulate.csv").exists()
    assert cli.main(["fixed-point", "--points", "0:-1", "--out", str(tmp_path / "fp.csv")]) == 0
    assert cli.main(["fixed-point", "--cdf=-2:0:3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fixed-point.png").exists()
    assert cli.main(["fixed-point"]) == 2


def test_cli_experiment_writes_csv_and_figure(tmp_path):
    spec = tmp_path / "s.ini"
    spec.write_text(SPEC)
    assert cli.main(["experiment", str(spec), "--out", str(tmp_path), "--threads", "2"]) == 0
    assert (tmp_path / "demo.csv").exists() and (tmp_path / "demo.png").exists()
    bad = tmp_path / "bad.ini"
    bad.write_text(SPEC.replace("op = schuetz", "op = unknown"))
    assert cli.main(["experiment", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["experiment", str(tmp_path / "missing.ini")]) == 2


def test_cli_exit_code_on_failing_row(tmp_path):
    spec = tmp_path / "f.ini"
    spec.write_text(SPEC + "threshold = -1\n")
    assert cli.main(["experiment", str(spec), "--out", str(tmp_path)]) == 1


def test_selftest(tmp_path):
    assert cli.main(["selftest", "--out", str(tmp_path)]) == 0
