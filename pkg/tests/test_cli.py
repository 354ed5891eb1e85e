import json
import subprocess
import sys

import pytest

from infogather import cli
from infogather.harness import export as ex


def test_plan_writes_csv_and_json(tmp_path, capsys):
    out = tmp_path / "plan.csv"
    code = cli.main(["plan", "--scenario", "sim2-heterogeneous", "--algo", "dls", "--alpha", "1",
                     "--seed", "3", "--out", str(out)])
    assert code == 0
    paths = json.loads(capsys.readouterr().out)
    meta, rows = ex.read_csv(paths["csv"])
    assert meta["seed"] == "3" and meta["command"] == "plan"
    assert list(rows[0]) == cli.PLAN_COLUMNS
    summary = json.loads((tmp_path / "plan.json").read_text())["summary"]
    assert summary["objective"] >= 0


@pytest.mark.parametrize("algo", ["cls", "cd"])
def test_plan_other_algorithms(tmp_path, algo):
    assert cli.main(["plan", "--scenario", "sim2-heterogeneous", "--algo", algo, "--alpha", "1",
                     "--seed", "1", "--out", str(tmp_path / "p.csv"), "--no-lazy", "--no-warm-start"]) == 0


def test_missing_argument_is_config_error(tmp_path):
    assert cli.main(["plan", "--scenario", "sim2-heterogeneous", "--out", str(tmp_path / "x.csv")]) == 2


def test_unknown_algo(tmp_path):
    assert cli.main(["plan", "--scenario", "sim2-heterogeneous", "--algo", "greedy", "--alpha", "1",
                     "--seed", "1", "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_scenario_is_config_error(tmp_path):
    assert cli.main(["track", "--scenario", str(tmp_path / "missing.json"), "--seed", "1",
                     "--out", str(tmp_path / "x.csv")]) == 2


def test_negative_seed_rejected(tmp_path):
    assert cli.main(["track", "--scenario", "hw-analog", "--seed", "-1", "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_values_are_config_errors(tmp_path):
    out = str(tmp_path / "x.csv")
    assert cli.main(["sphere", "--robots", "1", "--beta", "0", "--trials", "1", "--seed", "0", "--out", out]) == 2
    assert cli.main(["sphere", "--robots", "3", "--beta", "-1", "--trials", "1", "--seed", "0", "--out", out]) == 2
    assert cli.main(["bench-net", "--robots", "3", "--delay-ms", "-2", "--out", out]) == 2
    assert cli.main(["plan", "--scenario", "hw-analog", "--algo", "dls", "--alpha", "0", "--seed", "0",
                     "--out", out]) == 2


def test_thread_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("INFOGATHER_THREADS", "zero")
    assert cli.main(["bench-net", "--robots", "2", "--delay-ms", "1", "--trials", "1",
                     "--out", str(tmp_path / "x.csv")]) == 2
    monkeypatch.setenv("INFOGATHER_THREADS", "2")
    assert cli.threads() == 2


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def boom(args):
        raise RuntimeError("solver exploded")

    monkeypatch.setitem(cli.COMMANDS, "track", boom)
    assert cli.main(["track", "--scenario", "hw-analog", "--seed", "0", "--out", str(tmp_path / "x.csv")]) == 3


def test_bench_net_summary(tmp_path):
    assert cli.main(["bench-net", "--robots", "3", "--delay-ms", "5", "--trials", "2",
                     "--out", str(tmp_path / "b.csv")]) == 0
    summary = json.loads((tmp_path / "b.json").read_text())["summary"]
    assert summary["dls+lazy+warm"]["net_time_s"] > 0
    assert summary["cd-index"]["exchanges"] == 0


def test_sphere_parallel_matches_serial(tmp_path, monkeypatch):
    base = ["sphere", "--robots", "2", "--beta", "0.5", "--trials", "2", "--seed", "4"]
    assert cli.main(base + ["--out", str(tmp_path / "a.csv")]) == 0
    monkeypatch.setenv("INFOGATHER_THREADS", "2")
    assert cli.main(base + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_console_entry_point(tmp_path):
    out = tmp_path / "t.csv"
    proc = subprocess.run([sys.executable, "-m", "infogather.cli", "track", "--scenario", "hw-analog",
                           "--seed", "2", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
