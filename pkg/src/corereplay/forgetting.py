"""Accuracy history, per-task forgetting rates and interference rates."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping

EPS = 1e-6


class HistoryError(ValueError):
    pass


@dataclass(frozen=True)
class AccuracyHistory:
    """Per-round test accuracies.

    ``rows[i - 1]`` maps task id ``p`` (1..i) to the accuracy of task ``p``
    measured right after training task ``i``. Accuracies are fractions.
    """

    rows: tuple[Mapping[int, float], ...] = ()

    @property
    def num_rounds(self) -> int:
        return len(self.rows)

    def row(self, round_: int) -> Mapping[int, float]:
        if not 1 <= round_ <= len(self.rows):
            raise HistoryError(f"round {round_} not recorded")
        return self.rows[round_ - 1]

    def acc(self, round_: int, task: int) -> float:
        return self.row(round_)[task]

    def final(self) -> dict[int, float]:
        return dict(self.row(len(self.rows)))

    def trajectory(self, task: int) -> list[float]:
        """Accuracy of ``task`` at every round since it was introduced."""
        return [r[task] for r in self.rows if task in r]

    def record(self, round_: int, accuracies: Mapping[int, float]) -> "AccuracyHistory":
        return record_round(self, round_, accuracies)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "task_id", "accuracy"])
        for i, row in enumerate(self.rows, start=1):
            for p in sorted(row):
                w.writerow([i, p, repr(float(row[p]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AccuracyHistory":
        grouped: dict[int, dict[int, float]] = {}
        for rec in csv.DictReader(io.StringIO(text)):
            grouped.setdefault(int(rec["round"]), {})[int(rec["task_id"])] = float(rec["accuracy"])
        hist = cls()
        for r in sorted(grouped):
            hist = record_round(hist, r, grouped[r])
        return hist


def record_round(history: AccuracyHistory, round_: int,
                 accuracies: Mapping[int, float]) -> AccuracyHistory:
    expected = history.num_rounds + 1
    if round_ != expected:
        raise HistoryError(f"round gap: expected round {expected}, got {round_}")
    missing = set(range(1, round_ + 1)) - set(accuracies)
    extra = set(accuracies) - set(range(1, round_ + 1))
    if missing or extra:
        raise HistoryError(
            f"incomplete row for round {round_}: missing {sorted(missing)}, unexpected {sorted(extra)}")
    row = {p: float(accuracies[p]) for p in range(1, round_ + 1)}
    for p, a in row.items():
        if not 0.0 <= a <= 1.0:
            raise HistoryError(f"accuracy {a} for task {p} outside [0, 1]")
    return AccuracyHistory(history.rows + (row,))


def _check_tau(history: AccuracyHistory, tau: int) -> None:
    if tau < 2:
        raise HistoryError("rates need tau >= 2")
    if history.num_rounds < tau:
        raise HistoryError(f"history has {history.num_rounds} rounds, need {tau}")


def forgetting_rates(history: AccuracyHistory, tau: int) -> dict[int, float]:
    """Best earlier accuracy minus accuracy at round ``tau``, for each previous task.

    Clamped into ``[0, 1 - EPS]``: improvements count as no forgetting, and a
    total collapse stays strictly below 1 so ``-log(1 - f)`` is finite.
    """
    _check_tau(history, tau)
    now = history.row(tau)
    out = {}
    for p in range(1, tau):
        best = max(history.acc(i, p) for i in range(p, tau))
        out[p] = min(max(best - now[p], 0.0), 1.0 - EPS)
    return out


def interference_rates(history: AccuracyHistory, tau: int) -> dict[int, float]:
    """Softmax over previous tasks of their one-round accuracy drop."""
    _check_tau(history, tau)
    before, after = history.row(tau - 1), history.row(tau)
    drops = {p: before[p] - after[p] for p in range(1, tau)}
    top = max(drops.values())
    w = {p: math.exp(d - top) for p, d in drops.items()}
    z = math.fsum(w.values())
    return {p: v / z for p, v in w.items()}
