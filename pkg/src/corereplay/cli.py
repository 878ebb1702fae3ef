"""Command line entry point: ``corereplay {run,grid-search,ablation,report}``.

On failure a single JSON line ``{"error": <type>, "message": <text>}`` is
written to stderr and the exit code is 1 (2 for usage errors).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (STRATEGIES, ExperimentConfig, emit_report, load_config, render_table,
                      run_ablation, run_all_seeds, run_grid_search)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "strategy", None):
        cfg = replace(cfg, strategy=args.strategy)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    lam = getattr(args, "lam", None)
    if isinstance(lam, list) and len(lam) == 1:
        lam = lam[0]
    if isinstance(lam, float):
        cfg = replace(cfg, aqa=replace(cfg.aqa, lam=lam))
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    report = run_all_seeds(cfg, n_jobs=args.jobs)
    emit_report(report, args.out)
    print(render_table([(cfg.strategy, report.acc_avg, report.acc_min)]))
    return 0


def cmd_grid(args) -> int:
    cfg = _config(argparse.Namespace(**{**vars(args), "lam": None}))
    lambdas = args.lam or [1.0, 2.0, 3.0, 4.0, 5.0]
    rows = run_grid_search(cfg, lambdas, n_jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid_search.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "acc_avg", "acc_min"])
        w.writerows((repr(r.lam), repr(r.acc_avg), repr(r.acc_min)) for r in rows)
    print(render_table([(f"lambda={r.lam:g}", r.acc_avg, r.acc_min) for r in rows]))
    return 0


def cmd_ablation(args) -> int:
    cfg = _config(args)
    rows = run_ablation(cfg, n_jobs=args.jobs)
    out = Path(args.out)
    for row in rows:
        emit_report(row.report, out / row.strategy)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "strategy", "acc_avg", "acc_min"])
        w.writerows((r.variant, r.strategy, repr(r.acc_avg), repr(r.acc_min)) for r in rows)
    print(render_table([(r.variant, r.acc_avg, r.acc_min) for r in rows]))
    return 0


def cmd_report(args) -> int:
    root = Path(args.out)
    summaries = sorted(root.glob("**/summary.json"))
    if not summaries:
        raise FileNotFoundError(f"no summary.json under {root}")
    rows = []
    for path in summaries:
        s = json.loads(path.read_text())
        label = s["strategy"] if path.parent == root else str(path.parent.relative_to(root))
        rows.append((label, s["acc_avg"], s["acc_min"]))
    print(render_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corereplay", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, lam_many=False):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="run a single seed instead of config seeds")
        sp.add_argument("--strategy", choices=STRATEGIES)
        if lam_many:
            sp.add_argument("--lambda", dest="lam", type=float, action="append",
                            help="grid point (repeatable; default 1..5)")
        else:
            sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    common(sub.add_parser("run", help="run one strategy over all seeds"))
    common(sub.add_parser("grid-search", help="sweep lambda"), lam_many=True)
    common(sub.add_parser("ablation", help="CORE with AQA / QFDS removed"))
    rp = sub.add_parser("report", help="tabulate summaries found under --out")
    rp.add_argument("--out", required=True)
    return p


COMMANDS = {"run": cmd_run, "grid-search": cmd_grid, "ablation": cmd_ablation, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
