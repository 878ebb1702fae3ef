"""Experiment orchestration: strategies, metrics, grid search, ablation, reports."""
from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .aqa import AqaConfig, allocate, attention_to_counts, compute_attention, uniform_allocation
from .forgetting import AccuracyHistory, forgetting_rates, interference_rates
from .model import TrainConfig, TrainingMix, evaluate, extract_features, init_model, train_round
from .qfds import QFDS, RANDOM, ReplayBuffer, build_buffer
from .task_stream import Dataset, TaskStream, load_idx, make_synthetic_stream, split_into_tasks

# (allocation, selection) for every replay strategy
REPLAY_STRATEGIES = {
    "core": ("aqa", QFDS),
    "core_no_aqa": ("uniform", QFDS),
    "core_no_qfds": ("aqa", RANDOM),
    "er": ("uniform", RANDOM),
}
STRATEGIES = tuple(REPLAY_STRATEGIES) + ("naive", "joint")

ABLATION_VARIANTS = (
    ("CORE", False, False),
    ("CORE w/o AQA", True, False),
    ("CORE w/o QFDS", False, True),
    ("CORE w/o QFDS+AQA", True, True),
)

_INIT, _TRAIN, _SELECT = 0, 1, 2


class RoundError(RuntimeError):
    def __init__(self, round_: int, exc: BaseException):
        super().__init__(f"round {round_}: {type(exc).__name__}: {exc}")
        self.round = round_


@dataclass(frozen=True)
class SourceConfig:
    """Where the task stream comes from: ``idx`` files or a ``synthetic`` generator."""

    kind: str = "synthetic"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    classes_per_task: int = 2
    dim: int = 8
    samples_per_class: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("idx", "synthetic"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "idx":
            paths = (self.train_images, self.train_labels, self.test_images, self.test_labels)
            if any(p is None for p in paths):
                raise ValueError("idx source needs train/test image and label paths")

    def to_dict(self) -> dict:
        if self.kind == "idx":
            keys = ("kind", "train_images", "train_labels", "test_images", "test_labels")
        else:
            keys = ("kind", "classes_per_task", "dim", "samples_per_class", "seed")
        return {k: getattr(self, k) for k in keys}


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    num_tasks: int = 5
    strategy: str = "core"
    aqa: AqaConfig = field(default_factory=AqaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (1, 2, 3)
    hidden_sizes: tuple[int, ...] = (64,)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.num_tasks < 1:
            raise ValueError("num_tasks must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "num_tasks": self.num_tasks,
            "strategy": self.strategy,
            "aqa": {"lambda": self.aqa.lam, "buffer_capacity": self.aqa.buffer_capacity},
            "train": asdict(self.train),
            "seeds": list(self.seeds),
            "hidden_sizes": list(self.hidden_sizes),
        }

    @classmethod
    def from_dict(cls, d: Mapping, base_dir=None) -> "ExperimentConfig":
        known = {"source", "num_tasks", "strategy", "aqa", "train", "seeds", "hidden_sizes"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        src = dict(d.get("source", {}))
        if base_dir is not None:
            for k in ("train_images", "train_labels", "test_images", "test_labels"):
                if src.get(k):
                    src[k] = str((Path(base_dir) / src[k]).resolve())
        a = dict(d.get("aqa", {}))
        if "lambda" in a:
            a["lam"] = a.pop("lambda")
        kwargs = {k: d[k] for k in ("num_tasks", "strategy", "seeds", "hidden_sizes") if k in d}
        return cls(source=SourceConfig(**src), aqa=AqaConfig(**a),
                   train=TrainConfig(**d.get("train", {})), **kwargs)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_dict(json.loads(path.read_text()), base_dir=path.parent)


def ablated(cfg: ExperimentConfig, drop_aqa: bool, drop_qfds: bool) -> ExperimentConfig:
    """The replay strategy obtained by swapping AQA for uniform allocation and/or
    QFDS for random selection."""
    alloc, select = REPLAY_STRATEGIES[cfg.strategy]
    want = ("uniform" if drop_aqa else alloc, RANDOM if drop_qfds else select)
    name = next(s for s, comp in REPLAY_STRATEGIES.items() if comp == want)
    return replace(cfg, strategy=name)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@functools.lru_cache(maxsize=8)
def build_stream(source: SourceConfig, num_tasks: int) -> TaskStream:
    if source.kind == "idx":
        train = load_idx(source.train_images, source.train_labels)
        test = load_idx(source.test_images, source.test_labels)
        return split_into_tasks(train, test, num_tasks)
    return make_synthetic_stream(num_tasks, source.classes_per_task, source.dim,
                                 source.samples_per_class, source.seed)


@dataclass(frozen=True)
class TraceRow:
    round: int
    task_id: int
    att_raw: float
    att_norm: float
    partition: str
    att_final: float
    count: int


@dataclass(frozen=True)
class SeedResult:
    seed: int
    history: AccuracyHistory
    trace: tuple[TraceRow, ...] = ()
    audit: tuple[tuple[int, int, int, int], ...] = ()

    @property
    def metrics(self) -> tuple[float, float]:
        return compute_metrics(self.history.final())


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    results: tuple[SeedResult, ...]
    wall_time: float = 0.0

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(r.seed for r in self.results)

    @property
    def acc_avg(self) -> float:
        return float(np.mean([r.metrics[0] for r in self.results]))

    @property
    def acc_min(self) -> float:
        return float(np.mean([r.metrics[1] for r in self.results]))

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def result(self, seed: int) -> SeedResult:
        return next(r for r in self.results if r.seed == seed)

    def summary(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "config": self.config.to_dict(),
            "strategy": self.config.strategy,
            "seeds": list(self.seeds),
            "acc_avg": self.acc_avg,
            "acc_min": self.acc_min,
            "per_seed": [
                {"seed": r.seed, "acc_avg": r.metrics[0], "acc_min": r.metrics[1],
                 "final": {str(k): v for k, v in sorted(r.history.final().items())}}
                for r in self.results
            ],
        }


def compute_metrics(final_round: Mapping[int, float]) -> tuple[float, float]:
    """Mean and minimum of the final per-task accuracies."""
    if not final_round:
        raise ValueError("no accuracies to summarise")
    vals = list(final_round.values())
    return float(np.mean(vals)), float(min(vals))


def percent(x: float) -> str:
    return f"{100.0 * x:.2f}"


def _evaluate_upto(model, stream: TaskStream, tau: int) -> dict[int, float]:
    return {p: evaluate(model, stream.task(p).test_set) for p in range(1, tau + 1)}


def _run_joint(cfg: ExperimentConfig, stream: TaskStream, model, seed: int) -> SeedResult:
    pooled = Dataset.concat([t.train_set for t in stream.tasks])
    tcfg = replace(cfg.train, seed=derive_seed(cfg.train.seed, seed, _TRAIN, 0))
    model = train_round(model, TrainingMix(pooled), tcfg)
    # one model, reported in the same triangular layout as the continual runs
    history = AccuracyHistory()
    for tau in range(1, len(stream) + 1):
        history = history.record(tau, _evaluate_upto(model, stream, tau))
    return SeedResult(seed, history)


def run_experiment(cfg: ExperimentConfig, seed: int) -> ExperimentReport:
    """Run one strategy on one seed.

    Each round trains on the current task plus the buffer, evaluates every
    task seen so far, and (for replay strategies) rebuilds the buffer from the
    per-task training pools using the freshly trained model's features.
    """
    t0 = time.perf_counter()
    stream = build_stream(cfg.source, cfg.num_tasks)
    sizes = (stream.input_dim, *cfg.hidden_sizes, stream.total_classes)
    model = init_model(sizes, seed=derive_seed(seed, _INIT))
    if cfg.strategy == "joint":
        res = _run_joint(cfg, stream, model, seed)
        return ExperimentReport(cfg, (res,), time.perf_counter() - t0)

    components = REPLAY_STRATEGIES.get(cfg.strategy)
    pools = {t.task_id: t.class_pools() for t in stream.tasks}
    buffer = ReplayBuffer.empty(stream.input_dim, cfg.aqa.buffer_capacity)
    history = AccuracyHistory()
    trace: list[TraceRow] = []
    audit: list[tuple[int, int, int, int]] = []
    for tau in range(1, len(stream) + 1):
        try:
            task = stream.task(tau)
            tcfg = replace(cfg.train, seed=derive_seed(cfg.train.seed, seed, _TRAIN, tau))
            model = train_round(model, TrainingMix(task.train_set, buffer.data), tcfg)
            history = history.record(tau, _evaluate_upto(model, stream, tau))
            if components is None:
                continue
            alloc_kind, select_kind = components
            if alloc_kind == "aqa":
                if tau == 1:
                    f_rates, i_rates = {}, {}
                else:
                    f_rates = forgetting_rates(history, tau)
                    i_rates = interference_rates(history, tau)
                allocation = allocate(compute_attention(f_rates, i_rates, tau), cfg.aqa)
            else:
                allocation = uniform_allocation(range(1, tau + 1), cfg.aqa)
            available = {p: len(stream.task(p).train_set) for p in range(1, tau + 1)}
            counts = attention_to_counts(allocation.final, cfg.aqa, available)
            buffer = build_buffer({p: pools[p] for p in counts}, counts,
                                  functools.partial(extract_features, model), select_kind,
                                  seed=derive_seed(seed, _SELECT, tau),
                                  capacity=cfg.aqa.buffer_capacity)
        except Exception as exc:
            raise RoundError(tau, exc) from exc
        for p in range(1, tau + 1):
            trace.append(TraceRow(tau, p, allocation.raw[p], allocation.normalized[p],
                                  allocation.group(p), allocation.final[p], counts[p]))
        audit.extend((tau, *row) for row in buffer.audit_rows())
    res = SeedResult(seed, history, tuple(trace), tuple(audit))
    return ExperimentReport(cfg, (res,), time.perf_counter() - t0)


def merge_reports(reports: Sequence[ExperimentReport]) -> ExperimentReport:
    cfg = reports[0].config
    if any(r.config != cfg for r in reports):
        raise ValueError("cannot merge reports of different configurations")
    results = tuple(res for r in reports for res in r.results)
    return ExperimentReport(cfg, results, sum(r.wall_time for r in reports))


def _run_job(args):
    cfg, seed = args
    return run_experiment(cfg, seed)


def _map(jobs, n_jobs: int):
    if n_jobs <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_run_job, jobs))


def run_all_seeds(cfg: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    """Run ``cfg`` for every seed in ``cfg.seeds``; seeds run as independent jobs."""
    return merge_reports(_map([(cfg, s) for s in cfg.seeds], n_jobs))


@dataclass(frozen=True)
class GridRow:
    lam: float
    acc_avg: float
    acc_min: float


def run_grid_search(cfg: ExperimentConfig, lambdas: Sequence[float],
                    n_jobs: int = 1) -> list[GridRow]:
    """Seed-averaged accuracy for each lambda, rows sorted by lambda."""
    lambdas = [float(x) for x in lambdas]
    if len(set(lambdas)) != len(lambdas):
        raise ValueError(f"duplicate grid point in {lambdas}")
    cfgs = [replace(cfg, aqa=replace(cfg.aqa, lam=lam)) for lam in sorted(lambdas)]
    reports = _map([(c, s) for c in cfgs for s in c.seeds], n_jobs)
    rows = []
    k = len(cfg.seeds)
    for i, c in enumerate(cfgs):
        merged = merge_reports(reports[i * k:(i + 1) * k])
        rows.append(GridRow(c.aqa.lam, merged.acc_avg, merged.acc_min))
    return rows


@dataclass(frozen=True)
class AblationRow:
    variant: str
    strategy: str
    acc_avg: float
    acc_min: float
    report: ExperimentReport = field(repr=False, compare=False)


def run_ablation(cfg: ExperimentConfig, n_jobs: int = 1) -> list[AblationRow]:
    """CORE with AQA and/or QFDS removed; all variants share seeds, streams and inits."""
    if cfg.strategy != "core":
        raise ValueError("ablation starts from the core strategy")
    variants = [(label, ablated(cfg, da, dq)) for label, da, dq in ABLATION_VARIANTS]
    reports = _map([(c, s) for _, c in variants for s in c.seeds], n_jobs)
    k = len(cfg.seeds)
    rows = []
    for i, (label, c) in enumerate(variants):
        merged = merge_reports(reports[i * k:(i + 1) * k])
        rows.append(AblationRow(label, c.strategy, merged.acc_avg, merged.acc_min, merged))
    return rows


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write trajectory, allocation-trace and buffer-audit CSVs plus ``summary.json``.

    Wall time goes to a separate ``timing.json`` so every other file is a
    pure function of (config, seeds).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("trajectory.csv", "allocation_trace.csv", "buffer_audit.csv",
              "summary.json", "timing.json")}
    _write_csv(paths["trajectory.csv"], ["seed", "round", "task_id", "accuracy"],
               [(r.seed, i, p, _fmt(row[p]))
                for r in report.results for i, row in enumerate(r.history.rows, start=1)
                for p in sorted(row)])
    _write_csv(paths["allocation_trace.csv"],
               ["seed", "round", "task_id", "att_raw", "att_norm", "partition", "att_final", "count"],
               [(r.seed, t.round, t.task_id, _fmt(t.att_raw), _fmt(t.att_norm), t.partition,
                 _fmt(t.att_final), t.count) for r in report.results for t in r.trace])
    _write_csv(paths["buffer_audit.csv"], ["seed", "round", "task_id", "class_id", "pool_index"],
               [(r.seed, *row) for r in report.results for row in r.audit])
    paths["summary.json"].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    paths["timing.json"].write_text(json.dumps({"wall_time": report.wall_time}) + "\n")
    return list(paths.values())


def load_trajectories(out_dir) -> dict[int, AccuracyHistory]:
    """Rebuild per-seed histories from an emitted ``trajectory.csv``."""
    per_seed: dict[int, list[str]] = {}
    text = (Path(out_dir) / "trajectory.csv").read_text()
    for rec in csv.DictReader(io.StringIO(text)):
        per_seed.setdefault(int(rec["seed"]), []).append(
            f"{rec['round']},{rec['task_id']},{rec['accuracy']}")
    return {s: AccuracyHistory.from_csv("round,task_id,accuracy\n" + "\n".join(lines))
            for s, lines in per_seed.items()}


def render_table(rows: Sequence[tuple[str, float, float]]) -> str:
    """Percent table in the Acc_avg / Acc_min layout."""
    width = max([len("method")] + [len(r[0]) for r in rows])
    lines = [f"{'method':<{width}}  {'Acc_avg':>7}  {'Acc_min':>7}"]
    lines += [f"{name:<{width}}  {percent(a):>7}  {percent(m):>7}" for name, a, m in rows]
    return "\n".join(lines)


__all__ = [
    "ABLATION_VARIANTS", "AblationRow", "ExperimentConfig", "ExperimentReport", "GridRow",
    "REPLAY_STRATEGIES", "RoundError", "STRATEGIES", "SeedResult", "SourceConfig", "TraceRow",
    "ablated", "build_stream", "compute_metrics", "emit_report", "load_config",
    "load_trajectories", "merge_reports", "percent", "render_table", "run_ablation",
    "run_all_seeds", "run_experiment", "run_grid_search",
]
