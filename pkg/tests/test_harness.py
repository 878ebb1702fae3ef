import csv
import io
import json
from dataclasses import replace

import pytest

from corereplay import AqaConfig, ExperimentConfig, SourceConfig, TrainConfig
from corereplay.harness import (ABLATION_VARIANTS, RoundError, ablated, compute_metrics, emit_report,
                                load_config, load_trajectories, percent, run_ablation,
                                run_all_seeds, run_experiment, run_grid_search)

SYNTH = SourceConfig(kind="synthetic", classes_per_task=2, dim=8, samples_per_class=100, seed=3)


@pytest.fixture(scope="module")
def cfg():
    return ExperimentConfig(source=SYNTH, num_tasks=5, strategy="core",
                            aqa=AqaConfig(lam=2, buffer_capacity=50),
                            train=TrainConfig(0.1, 10, 32, 0), seeds=(1, 2), hidden_sizes=(64,))


@pytest.fixture(scope="module")
def reports(cfg):
    return {s: run_all_seeds(replace(cfg, strategy=s))
            for s in ("core", "er", "core_no_aqa", "core_no_qfds", "naive", "joint")}


def test_compute_metrics():
    avg, low = compute_metrics({1: 0.9, 2: 0.8, 3: 0.7})
    assert avg == pytest.approx(0.8, abs=1e-12) and low == 0.7
    assert compute_metrics({1: 0.95}) == (0.95, 0.95)
    with pytest.raises(ValueError):
        compute_metrics({})


def test_percent_rendering():
    assert (percent(0.9452), percent(0.8994)) == ("94.52", "89.94")


def test_naive_forgets_catastrophically(reports):
    for res in reports["naive"].results:
        assert res.metrics[1] < 0.05
        assert res.trace == () and res.audit == ()


def test_joint_is_upper_bound(reports):
    joint = reports["joint"]
    for strategy, rep in reports.items():
        for seed in joint.seeds:
            assert joint.result(seed).metrics[0] >= rep.result(seed).metrics[0], strategy


def test_round_structure(reports, cfg):
    for rep in reports.values():
        for res in rep.results:
            assert [len(r) for r in res.history.rows] == list(range(1, cfg.num_tasks + 1))


def test_buffer_audit_matches_trace(reports, cfg):
    for strategy in ("core", "er", "core_no_aqa", "core_no_qfds"):
        for res in reports[strategy].results:
            for tau in range(1, cfg.num_tasks + 1):
                rows = [t for t in res.trace if t.round == tau]
                audited = [a for a in res.audit if a[0] == tau]
                assert len(audited) == min(cfg.aqa.buffer_capacity, 160 * tau)
                for t in rows:
                    assert t.count == sum(1 for a in audited if a[1] == t.task_id)
                assert abs(sum(t.att_final for t in rows) - 1) < 1e-9


def test_uniform_strategies_allocate_evenly(reports):
    for res in reports["er"].results:
        counts = [t.count for t in res.trace if t.round == 3]
        assert counts == [17, 17, 16]


def test_shared_initialisation(reports):
    # the first round trains on task 1 alone, so every replay variant agrees there
    first = {s: [r.history.row(1) for r in reports[s].results]
             for s in ("core", "er", "core_no_aqa", "core_no_qfds", "naive")}
    assert len({json.dumps(v, sort_keys=True) for v in first.values()}) == 1


def test_deterministic(cfg, tmp_path):
    a = run_experiment(cfg, 1)
    b = run_experiment(cfg, 1)
    emit_report(a, tmp_path / "a")
    emit_report(b, tmp_path / "b")
    for name in ("trajectory.csv", "allocation_trace.csv", "buffer_audit.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_strategy_identity(cfg):
    er = replace(cfg, strategy="er")
    assert ablated(cfg, True, True).canonical_json() == er.canonical_json()
    assert ablated(cfg, True, False).strategy == "core_no_aqa"
    assert ablated(cfg, False, True).strategy == "core_no_qfds"
    assert ablated(cfg, False, False) == cfg


def test_emit_report(reports, cfg, tmp_path):
    rep = reports["core"]
    files = emit_report(rep, tmp_path)
    assert {p.name for p in files} == {"trajectory.csv", "allocation_trace.csv", "buffer_audit.csv",
                                      "summary.json", "timing.json"}
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["acc_avg"] == rep.acc_avg and summary["acc_min"] == rep.acc_min
    assert summary["fingerprint"] == cfg.fingerprint()
    assert ExperimentConfig.from_dict(summary["config"]) == cfg

    rows = list(csv.DictReader(io.StringIO((tmp_path / "trajectory.csv").read_text())))
    n = cfg.num_tasks
    for seed in cfg.seeds:
        assert sum(1 for r in rows if int(r["seed"]) == seed) == n * (n + 1) // 2
    hist = load_trajectories(tmp_path)
    assert hist[1].rows == rep.result(1).history.rows
    assert len(hist[1].trajectory(1)) == n

    trace = list(csv.DictReader(io.StringIO((tmp_path / "allocation_trace.csv").read_text())))
    assert list(trace[0]) == ["seed", "round", "task_id", "att_raw", "att_norm", "partition",
                              "att_final", "count"]
    assert {r["partition"] for r in trace} <= {"SR", "TR"}
    audit = (tmp_path / "buffer_audit.csv").read_text().splitlines()
    assert audit[0] == "seed,round,task_id,class_id,pool_index"


def test_grid_search(cfg):
    small = replace(cfg, num_tasks=2, seeds=(1,))
    rows = run_grid_search(small, [3.0, 1.0])
    assert [r.lam for r in rows] == [1.0, 3.0]
    assert len(run_grid_search(small, [2.0])) == 1
    with pytest.raises(ValueError, match="duplicate grid point"):
        run_grid_search(small, [2.0, 2.0])
    with pytest.raises(ValueError):
        run_grid_search(small, [0.5])


def test_ablation(cfg):
    small = replace(cfg, num_tasks=3, seeds=(1,))
    rows = run_ablation(small)
    assert [r.variant for r in rows] == [v[0] for v in ABLATION_VARIANTS]
    assert [r.strategy for r in rows] == ["core", "core_no_aqa", "core_no_qfds", "er"]
    er = run_all_seeds(replace(small, strategy="er"))
    assert rows[-1].acc_avg == er.acc_avg and rows[-1].acc_min == er.acc_min
    with pytest.raises(ValueError):
        run_ablation(replace(small, strategy="er"))


def test_round_error_annotated(cfg, monkeypatch):
    import corereplay.harness as h

    def boom(*a, **k):
        raise ValueError("selection failed")

    monkeypatch.setattr(h, "build_buffer", boom)
    with pytest.raises(RoundError, match="round 1: ValueError: selection failed") as err:
        run_experiment(cfg, 1)
    assert err.value.round == 1


def test_config_json_roundtrip(tmp_path, cfg):
    (tmp_path / "data").mkdir()
    path = tmp_path / "cfg.json"
    d = cfg.to_dict()
    path.write_text(json.dumps(d))
    assert load_config(path) == cfg
    d["source"] = {"kind": "idx", "train_images": "data/a", "train_labels": "data/b",
                   "test_images": "data/c", "test_labels": "data/d"}
    path.write_text(json.dumps(d))
    loaded = load_config(path)
    assert loaded.source.train_images == str((tmp_path / "data" / "a").resolve())
    d["bogus"] = 1
    path.write_text(json.dumps(d))
    with pytest.raises(ValueError, match="unknown config keys"):
        load_config(path)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(strategy="icarl")
    with pytest.raises(ValueError):
        SourceConfig(kind="idx")
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())


def test_parallel_seeds_match_serial(cfg, tmp_path):
    small = replace(cfg, num_tasks=3)
    emit_report(run_all_seeds(small, n_jobs=1), tmp_path / "serial")
    emit_report(run_all_seeds(small, n_jobs=2), tmp_path / "parallel")
    for name in ("trajectory.csv", "allocation_trace.csv", "buffer_audit.csv", "summary.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()
