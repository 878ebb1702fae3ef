import csv
import json
import subprocess
import sys

import pytest

from corereplay.cli import main

CONFIG = {
    "source": {"kind": "synthetic", "classes_per_task": 2, "dim": 6, "samples_per_class": 40, "seed": 1},
    "num_tasks": 3,
    "strategy": "core",
    "aqa": {"lambda": 2.0, "buffer_capacity": 30},
    "train": {"learning_rate": 0.1, "epochs": 3, "batch_size": 16, "seed": 0},
    "seeds": [1, 2],
    "hidden_sizes": [16],
}


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "config.json"
    p.write_text(json.dumps(CONFIG))
    return p


def test_run(config_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config_path), "--out", str(out), "--seed", "2",
                 "--strategy", "er", "--lambda", "3"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seeds"] == [2] and summary["strategy"] == "er"
    assert summary["config"]["aqa"]["lambda"] == 3.0
    assert "Acc_avg" in capsys.readouterr().out


def test_report(config_path, tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--config", str(config_path), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert f"{100 * summary['acc_avg']:.2f}" in text


def test_grid_search(config_path, tmp_path):
    out = tmp_path / "grid"
    assert main(["grid-search", "--config", str(config_path), "--out", str(out),
                 "--lambda", "2", "--lambda", "1"]) == 0
    rows = list(csv.DictReader((out / "grid_search.csv").open()))
    assert [float(r["lambda"]) for r in rows] == [1.0, 2.0]


def test_ablation(config_path, tmp_path, capsys):
    out = tmp_path / "abl"
    assert main(["ablation", "--config", str(config_path), "--out", str(out), "--seed", "1"]) == 0
    rows = list(csv.DictReader((out / "ablation.csv").open()))
    assert [r["variant"] for r in rows] == ["CORE", "CORE w/o AQA", "CORE w/o QFDS", "CORE w/o QFDS+AQA"]
    for strategy in ("core", "core_no_aqa", "core_no_qfds", "er"):
        assert (out / strategy / "summary.json").exists()


def test_failure_emits_json_error_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CONFIG, "strategy": "lwf"}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ValueError" and "lwf" in err["message"]


def test_grid_duplicate_lambda_fails(config_path, tmp_path, capsys):
    assert main(["grid-search", "--config", str(config_path), "--out", str(tmp_path / "g"),
                 "--lambda", "2", "--lambda", "2"]) == 1
    assert "duplicate grid point" in capsys.readouterr().err


def test_module_entry_point(config_path, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "corereplay", "report", "--out", str(tmp_path / "none")],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip())["error"] == "FileNotFoundError"
