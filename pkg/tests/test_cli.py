from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import empty_room
from dualclean.cli import main
from dualclean.world import load_scene, save_scene


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def test_help_exits_zero():
    for sub in ([], ["run"], ["bench"], ["gen"], ["eval"], ["report"]):
        with pytest.raises(SystemExit) as exc:
            main(sub + ["--help"])
        assert exc.value.code == 0
    out = subprocess.run([sys.executable, "-m", "dualclean", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "run" in out.stdout


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--speed", "3"])
    assert exc.value.code == 2


def test_run_writes_files(tmp_path, capsys):
    out = tmp_path / "r"
    assert run_cli("run", "--scene", "builtin:1", "--policy", "chebyshev", "--seed", 7, "--budget", 30,
                   "--out", out) == 0
    assert (out / "report.json").exists() and (out / "trajectory.tsv").exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema"] == 1 and rep["seed"] == 7
    assert "termination=" in capsys.readouterr().out


def test_run_bad_policy_names_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--policy", "nosuch"])
    assert exc.value.code == 2
    assert "--policy" in capsys.readouterr().err


def test_run_config_errors_exit_2(tmp_path, capsys):
    assert run_cli("run", "--robots", 5, "--out", tmp_path) == 2
    assert run_cli("run", "--scene", "builtin:9", "--out", tmp_path) == 2
    assert run_cli("run", "--alpha", 0.9, "--beta", 0.9, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_run_reproducible(tmp_path):
    args = ["run", "--scene", "builtin:2", "--policy", "dual", "--seed", 3, "--budget", 25, "--clock", "none"]
    assert run_cli(*args, "--out", tmp_path / "a") == 0
    assert run_cli(*args, "--out", tmp_path / "b") == 0
    for name in ("report.json", "trajectory.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DUALCLEAN_OUT", str(tmp_path / "env"))
    assert run_cli("run", "--policy", "idle", "--budget", 2, "--clock", "none") == 0
    assert (tmp_path / "env" / "report.json").exists()


def test_gen_then_run(tmp_path, capsys):
    path = tmp_path / "g.json"
    assert run_cli("gen", "--layout", "rect", "--density", 0.15, "--pattern", "random", "--seed", 1,
                   "--out", path) == 0
    scene = load_scene(path)
    assert scene.id and scene.sweep_targets
    assert run_cli("run", "--scene", path, "--policy", "vertical", "--budget", 15, "--out", tmp_path / "r") == 0
    assert run_cli("gen", "--density", 0.95, "--out", tmp_path / "x.json") == 2
    assert not (tmp_path / "x.json").exists()


def test_eval_reproduces_online_report(tmp_path):
    out = tmp_path / "r"
    assert run_cli("run", "--scene", "builtin:3", "--policy", "dual", "--robots", 2, "--budget", 20,
                   "--sr-counting", "steps", "--out", out) == 0
    assert run_cli("eval", "--log", out / "trajectory.tsv", "--out", tmp_path / "again.json") == 0
    online = json.loads((out / "report.json").read_text())
    again = json.loads((tmp_path / "again.json").read_text())
    for k in ("termination", "seed"):
        online.pop(k)
    assert again == online


def test_eval_truncated_logs(tmp_path):
    out = tmp_path / "r"
    assert run_cli("run", "--policy", "idle", "--budget", 2, "--out", out) == 0
    text = (out / "trajectory.tsv").read_text().splitlines()
    head_only = tmp_path / "head.tsv"
    head_only.write_text("\n".join(text[:2]) + "\n")
    assert run_cli("eval", "--log", head_only) == 3
    cut = tmp_path / "cut.tsv"
    cut.write_text("\n".join(text[:5]) + "\n" + text[5][:12] + "\n")
    assert run_cli("eval", "--log", cut) == 2
    assert run_cli("eval", "--log", tmp_path / "missing.tsv") == 2


def test_eval_hand_written_log(tmp_path, capsys):
    scene_path = tmp_path / "room.json"
    save_scene(empty_room(5, 5), scene_path)
    log = tmp_path / "hand.tsv"
    rows = ["0\t0.000000\t0\t1.000000\t1.000000\t0.000000\tsweep\t-\t0.000000",
            "1\t0.100000\t0\t1.100000\t1.000000\t0.000000\tsweep\t-\t0.010000",
            "2\t0.200000\t0\t1.300000\t1.000000\t0.000000\tsweep\tcollision\t0.030000"]
    log.write_text('# dualclean-trajectory {"dt": 0.1}\nstep\ttime\trobot\tx\ty\ttheta\tmode\tevents\tt_comp\n'
                   + "\n".join(rows) + "\n")
    assert run_cli("eval", "--log", log, "--scene", scene_path) == 0
    rep = json.loads(capsys.readouterr().out)
    # speeds 1 and 2 m/s, one second difference of 0.1 m over 0.01 s^2
    assert rep["vel_avg"] == pytest.approx(1.5)
    assert rep["acc_avg"] == pytest.approx(10.0)
    assert rep["jerk_avg"] is None and "jerk_too_short" in rep["flags"]
    assert rep["l_total"] == pytest.approx(0.3)
    assert rep["ft"] == pytest.approx(0.2) and rep["ct"] == pytest.approx(0.02)
    assert rep["collision"] == 1 and rep["me"] is None
    assert rep["tcr"] == 1.0
    # the log carries no scene, so one must be given
    assert run_cli("eval", "--log", log) == 2


def test_bench_and_report(tmp_path, capsys):
    out = tmp_path / "b"
    assert run_cli("bench", "--scene", "builtin:1", "--policy", "vertical", "--policy", "idle", "--runs", 2,
                   "--budget", 10, "--clock", "none", "--out", out) == 0
    table = (out / "bench.tsv").read_text().splitlines()
    assert len(table) == 3
    rec = json.loads((out / "bench.json").read_text())
    assert len(rec["episodes"]) == 4 and rec["schema"] == 1
    capsys.readouterr()
    rep = tmp_path / "rep"
    assert run_cli("report", out / "bench.json", "--out", rep) == 0
    text = capsys.readouterr().out
    assert "TCR" in text and "±" in text
    for name in ("summary.txt", "summary.tsv", "metrics.png"):
        assert (rep / name).exists()
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run_cli("report", bad, "--out", rep) == 2


def test_bench_suite_and_report_with_plot(tmp_path, capsys):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"runs": 1, "defaults": {"time_budget": 5, "clock": "none"},
                                 "episodes": [{"scene": "builtin:2", "policies": ["frontier"]}]}))
    out = tmp_path / "b"
    assert run_cli("bench", "--suite", suite, "--out", out, "--jobs", 2) == 0
    run_out = tmp_path / "r"
    assert run_cli("run", "--policy", "horizontal", "--budget", 5, "--out", run_out, "--plot") == 0
    assert (run_out / "trajectory.png").stat().st_size > 0
    assert run_cli("report", run_out / "report.json", out / "bench.json", "--log", run_out / "trajectory.tsv",
                   "--out", tmp_path / "rep") == 0
    assert (tmp_path / "rep" / "trajectory.png").exists()
