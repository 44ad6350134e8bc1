import json
import subprocess
import sys

import pytest

from tdd_dynamics.cli import main

DEC = """\
name = dec
steps = 8
policy.kind = decoupled
delta.k = 1
output.csv = dec.csv
output.svg = dec.svg
"""

CPL = """\
name = cpl
steps = 20
policy.kind = dry_coupled
delta.k = 4
output.csv = cpl.csv
"""


@pytest.fixture
def scenarios(tmp_path):
    (tmp_path / "dec.conf").write_text(DEC)
    (tmp_path / "cpl.conf").write_text(CPL)
    return tmp_path


def test_run_ok(scenarios, capsys):
    assert main(["run", str(scenarios / "dec.conf")]) == 0
    assert "dec: steps=8" in capsys.readouterr().out
    assert (scenarios / "dec.csv").exists()
    assert (scenarios / "dec.svg").exists()


def test_run_explosion_exit_3(scenarios):
    assert main(["run", str(scenarios / "cpl.conf")]) == 3
    assert (scenarios / "cpl.csv").read_text().rstrip().endswith("# truncated=true")


def test_run_bad_config_exit_2(tmp_path, capsys):
    (tmp_path / "bad.conf").write_text("steps = 1\n")
    assert main(["run", str(tmp_path / "bad.conf")]) == 2
    assert "steps" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.conf")]) == 2


def test_run_all(scenarios, capsys):
    assert main(["run", "--all", str(scenarios), "--jobs", "2"]) == 3
    out = capsys.readouterr().out
    assert "[0]" in out and "[3]" in out
    assert main(["run", "--all", str(scenarios / "nowhere")]) == 2


def test_env_seed_changes_output(scenarios, monkeypatch):
    conf = scenarios / "g.conf"
    conf.write_text(DEC.replace("delta.k = 1", "delta.k = 1..3").replace("dec.", "g."))
    main(["run", str(conf)])
    base = (scenarios / "g.csv").read_text()
    monkeypatch.setenv("TDD_DYNAMICS_SEED", "12345")
    main(["run", str(conf)])
    assert (scenarios / "g.csv").read_text() != base
    monkeypatch.setenv("TDD_DYNAMICS_SEED", "oops")
    assert main(["run", str(conf)]) == 2


def test_validate(scenarios, capsys):
    main(["run", str(scenarios / "cpl.conf")])
    capsys.readouterr()
    code = main(["validate", str(scenarios / "cpl.csv"), "--regime", "coupled", "--tol", "0.1"])
    assert code == 1  # every row of the truncated run falls inside the warmup
    assert "coupled prediction" in capsys.readouterr().out
    empty = scenarios / "empty.csv"
    empty.write_text("")
    assert main(["validate", str(empty), "--regime", "uncoupled"]) == 2
    assert main(["validate", str(empty), "--regime", "bogus"]) == 2


def test_analyze_demo_and_csv(scenarios, capsys):
    assert main(["analyze", "--demo", "logistic", "--out", str(scenarios / "r.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["classification"] == "chaotic_indicative"
    assert json.loads((scenarios / "r.json").read_text()) == report

    main(["run", str(scenarios / "dec.conf")])
    capsys.readouterr()
    svg = scenarios / "a.svg"
    assert main(["analyze", str(scenarios / "dec.csv"), "--svg", str(svg)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["classification"] == "drifting"
    assert "insufficient length" in report["notes"]
    assert svg.exists()
    assert main(["analyze"]) == 2
    assert main(["analyze", "--demo", "logistic", "--horizon", "0"]) == 2


def test_compare(scenarios, capsys):
    (scenarios / "b.conf").write_text(DEC.replace("delta.k = 1", "delta.k = 2").replace("dec.", "b."))
    main(["run", str(scenarios / "dec.conf")])
    main(["run", str(scenarios / "b.conf")])
    capsys.readouterr()
    assert main(["compare", str(scenarios / "dec.csv"), str(scenarios / "b.csv")]) == 0
    assert "median lambda" in capsys.readouterr().out


def test_usage_error_exit_2():
    assert main(["frobnicate"]) == 2
    assert main(["--help"]) == 0


def test_console_module(scenarios):
    proc = subprocess.run(
        [sys.executable, "-m", "tdd_dynamics.cli", "run", str(scenarios / "cpl.conf")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 3
    assert "truncated=true" in proc.stdout
