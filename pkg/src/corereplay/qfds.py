"""Exemplar selection and replay-buffer assembly.

QFDS alternates two steps per class: draw one candidate at random, then
greedily add the candidate that brings the running feature mean of the
selection closest (Euclidean) to the feature mean of the whole class pool.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .task_stream import Dataset

QFDS = "qfds"
RANDOM = "random"

Extractor = Callable[[np.ndarray], np.ndarray]
Picker = Callable[[np.ndarray], int]


class InfeasibleQuotaError(ValueError):
    pass


@dataclass(frozen=True)
class ClassFeatureSummary:
    class_id: int
    mean: np.ndarray
    count: int


def _features(pool, extract: Extractor | None) -> np.ndarray:
    X = pool.X if isinstance(pool, Dataset) else np.asarray(pool, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X if extract is None else np.asarray(extract(X), dtype=np.float64)


def class_feature_mean(pool, extract: Extractor | None = None, class_id: int = -1) -> ClassFeatureSummary:
    feats = _features(pool, extract)
    if len(feats) == 0:
        raise ValueError("cannot summarise an empty pool")
    return ClassFeatureSummary(class_id, feats.mean(axis=0), len(feats))


def greedy_step(feats: np.ndarray, selected: Sequence[int], mu: np.ndarray) -> int:
    """Index of the unselected row whose addition puts the selection mean closest to ``mu``.

    Ties resolve to the lowest index.
    """
    mask = np.ones(len(feats), dtype=bool)
    mask[list(selected)] = False
    cand = np.flatnonzero(mask)
    if len(cand) == 0:
        raise ValueError("no candidates left")
    running = feats[list(selected)].sum(axis=0) if len(selected) else np.zeros(feats.shape[1])
    means = (running + feats[cand]) / (len(selected) + 1)
    dist = np.sum((means - mu) ** 2, axis=1)
    # mathematically equal distances can differ by rounding; treat them as ties
    tol = 1e-12 * (1.0 + float(np.max(np.sum(means ** 2, axis=1))) + float(mu @ mu))
    return int(cand[np.flatnonzero(dist <= dist.min() + tol)[0]])


def qfds_select(pool, num: int, extract: Extractor | None = None, seed=None,
                pick: Picker | None = None) -> list[int]:
    """Select ``num`` pool indices without replacement.

    Each iteration draws one index uniformly from the unselected candidates
    (via ``pick`` when given, else a generator seeded by ``seed``) and then
    adds the greedy best. An odd ``num`` ends with a single greedy step.
    Returns indices in selection order.
    """
    feats = _features(pool, extract)
    n = len(feats)
    if not 0 <= num <= n:
        raise ValueError(f"cannot select {num} from a pool of {n}")
    if num == 0:
        return []
    mu = feats.mean(axis=0)
    if pick is None:
        rng = np.random.default_rng(seed)
        pick = lambda cand: int(cand[rng.integers(len(cand))])  # noqa: E731

    selected: list[int] = []
    taken = np.zeros(n, dtype=bool)
    while len(selected) < num:
        if num - len(selected) >= 2:
            i = int(pick(np.flatnonzero(~taken)))
            if taken[i]:
                raise ValueError(f"picker returned already-selected index {i}")
            selected.append(i)
            taken[i] = True
        j = greedy_step(feats, selected, mu)
        selected.append(j)
        taken[j] = True
    return selected


def random_select(pool, num: int, seed=None) -> list[int]:
    n = len(pool)
    if not 0 <= num <= n:
        raise ValueError(f"cannot select {num} from a pool of {n}")
    return np.random.default_rng(seed).choice(n, size=num, replace=False).tolist()


def split_quota(quota: int, class_sizes: Mapping[int, int]) -> dict[int, int]:
    """Spread a task quota over its classes as evenly as their pools allow.

    Leftover units go to lower class ids; a class that cannot fill its share
    passes the overflow on to the others.
    """
    classes = sorted(class_sizes)
    if quota > sum(class_sizes.values()):
        raise InfeasibleQuotaError(f"quota {quota} exceeds pool of {sum(class_sizes.values())}")
    out = {c: 0 for c in classes}
    left = quota
    open_ = [c for c in classes if class_sizes[c] > 0]
    while left:
        share, extra = divmod(left, len(open_))
        for k, c in enumerate(open_):
            out[c] += share + (1 if k < extra else 0)
        left = 0
        for c in open_:
            if out[c] > class_sizes[c]:
                left += out[c] - class_sizes[c]
                out[c] = class_sizes[c]
        open_ = [c for c in open_ if out[c] < class_sizes[c]]
    return out


@dataclass(frozen=True, eq=False)
class ReplayBuffer:
    """Exemplars with their task id, class id and index into the class pool."""

    data: Dataset
    task_ids: np.ndarray
    pool_indices: np.ndarray
    capacity: int

    def __post_init__(self):
        if len(self.data) > self.capacity:
            raise ValueError(f"{len(self.data)} entries exceed capacity {self.capacity}")

    def __len__(self) -> int:
        return len(self.data)

    @classmethod
    def empty(cls, dim: int, capacity: int = 0) -> "ReplayBuffer":
        return cls(Dataset.empty(dim), np.zeros(0, np.int64), np.zeros(0, np.int64), capacity)

    def counts_by_task(self) -> dict[int, int]:
        ids, counts = np.unique(self.task_ids, return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))

    def audit_rows(self) -> list[tuple[int, int, int]]:
        return [(int(t), int(c), int(i))
                for t, c, i in zip(self.task_ids, self.data.y, self.pool_indices)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task_id", "class_id", "pool_index"])
        w.writerows(self.audit_rows())
        return buf.getvalue()


def build_buffer(pools: Mapping[int, Mapping[int, Dataset]], alloc: Mapping[int, int],
                 extract: Extractor | None, strategy: str = QFDS, seed: int = 0,
                 capacity: int | None = None) -> ReplayBuffer:
    """Fill each task's quota class by class with the chosen selection strategy.

    ``pools`` maps task id to class id to that class's candidate samples.
    Every (task, class) cell draws from its own generator seeded with
    ``(seed, task_id, class_id)``.
    """
    if strategy not in (QFDS, RANDOM):
        raise ValueError(f"unknown selection strategy {strategy!r}")
    missing = set(alloc) - set(pools)
    if missing:
        raise ValueError(f"allocation names tasks without pools: {sorted(missing)}")
    total = sum(alloc.values())
    capacity = total if capacity is None else capacity
    parts, tasks, idxs = [], [], []
    dim = None
    for task_id in sorted(alloc):
        cells = pools[task_id]
        sizes = {c: len(d) for c, d in cells.items()}
        try:
            per_class = split_quota(int(alloc[task_id]), sizes)
        except InfeasibleQuotaError as exc:
            raise InfeasibleQuotaError(f"task {task_id}: {exc}") from None
        for class_id in sorted(cells):
            pool = cells[class_id]
            dim = pool.dim
            k = per_class[class_id]
            if k == 0:
                continue
            cell_seed = [seed, task_id, class_id]
            if strategy == QFDS:
                chosen = qfds_select(pool, k, extract, seed=cell_seed)
            else:
                chosen = random_select(pool, k, seed=cell_seed)
            chosen = np.asarray(chosen, dtype=np.int64)
            parts.append(pool.subset(chosen))
            tasks.append(np.full(k, task_id, dtype=np.int64))
            idxs.append(chosen)
    if not parts:
        if dim is None:
            dim = next((d.dim for cells in pools.values() for d in cells.values()), 0)
        return ReplayBuffer.empty(dim, capacity)
    return ReplayBuffer(Dataset.concat(parts), np.concatenate(tasks), np.concatenate(idxs), capacity)
