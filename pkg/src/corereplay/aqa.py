"""Adaptive quantity allocation: turn forgetting into per-task buffer quotas.

Previous tasks get attention ``-log(1 - f_p)``; the newest task gets
``-log(1 - sum_p f_p * i_p)``. Attention is softmax-normalised, tasks at or
below the floor ``1 / (lambda * n)`` are pinned to that floor (spaced
repetition) and the remaining mass is split proportionally among the rest
(targeted recall).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

SR = "SR"
TR = "TR"


@dataclass(frozen=True)
class AqaConfig:
    lam: float = 2.0
    buffer_capacity: int = 500

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        if self.buffer_capacity < 0:
            raise ValueError("buffer_capacity must be >= 0")


@dataclass(frozen=True)
class AttentionAllocation:
    raw: dict[int, float]
    normalized: dict[int, float]
    final: dict[int, float]
    spaced: frozenset[int] = field(default_factory=frozenset)
    targeted: frozenset[int] = field(default_factory=frozenset)

    def group(self, task: int) -> str:
        return SR if task in self.spaced else TR


def compute_attention(forgetting: Mapping[int, float], interference: Mapping[int, float],
                      tau: int) -> dict[int, float]:
    """Raw attention for tasks ``1..tau``."""
    prev = range(1, tau)
    if set(forgetting) != set(prev) or set(interference) != set(prev):
        raise ValueError(f"forgetting and interference rates must cover tasks 1..{tau - 1}")
    att = {p: -math.log1p(-forgetting[p]) for p in prev}
    mixed = math.fsum(forgetting[p] * interference[p] for p in prev)
    att[tau] = -math.log1p(-mixed)
    # -log1p(-0.0) is -0.0
    return {p: v + 0.0 for p, v in att.items()}


def softmax_dict(values: Mapping[int, float]) -> dict[int, float]:
    keys = sorted(values)
    top = max(values[k] for k in keys)
    w = [math.exp(values[k] - top) for k in keys]
    z = math.fsum(w)
    return {k: wk / z for k, wk in zip(keys, w)}


def allocate(raw: Mapping[int, float], cfg: AqaConfig) -> AttentionAllocation:
    if not raw:
        raise ValueError("no tasks to allocate")
    norm = softmax_dict(raw)
    n = len(norm)
    floor = 1.0 / (cfg.lam * n)
    spaced = frozenset(p for p, a in norm.items() if a <= floor)
    targeted = frozenset(norm) - spaced
    if not targeted:
        final = {p: 1.0 / n for p in norm}
    else:
        rest = 1.0 - len(spaced) / (cfg.lam * n)
        tr_mass = math.fsum(norm[p] for p in targeted)
        final = {p: floor if p in spaced else rest * norm[p] / tr_mass for p in sorted(norm)}
    return AttentionAllocation(dict(sorted(raw.items())), norm, final, spaced, targeted)


def uniform_allocation(tasks, cfg: AqaConfig) -> AttentionAllocation:
    """Equal shares for every task; zero raw attention run through :func:`allocate`."""
    return allocate({p: 0.0 for p in tasks}, cfg)


def largest_remainder(shares: Mapping[int, float], total: int) -> dict[int, int]:
    """Integer apportionment of ``total`` proportional to ``shares``.

    Floors first, then hands out the leftover units by descending fractional
    part; equal remainders go to the lower task id.
    """
    keys = sorted(shares)
    if not keys:
        return {}
    weight = np.array([shares[k] for k in keys], dtype=np.float64)
    s = weight.sum()
    if total == 0 or s <= 0:
        base = np.zeros(len(keys), dtype=np.int64)
        if total:
            base += total // len(keys)
            base[: total % len(keys)] += 1
        return dict(zip(keys, base.tolist()))
    exact = weight / s * total
    # snap values that are integral up to rounding noise
    snapped = np.where(np.abs(exact - np.rint(exact)) < 1e-9, np.rint(exact), exact)
    counts = np.floor(snapped).astype(np.int64)
    rem = snapped - counts
    short = total - int(counts.sum())
    # stable sort on -rem keeps lower task ids first among ties
    order = np.argsort(-rem, kind="stable")
    if short > 0:
        counts[order[:short]] += 1
    elif short < 0:
        for i in order[::-1]:
            if short == 0:
                break
            if counts[i] > 0:
                counts[i] -= 1
                short += 1
    return dict(zip(keys, counts.tolist()))


def attention_to_counts(final: Mapping[int, float], cfg: AqaConfig,
                        available: Mapping[int, int] | None = None) -> dict[int, int]:
    """Largest-remainder rounding of ``final * capacity``.

    With ``available`` (samples each task can supply), quotas that exceed
    supply are capped and the surplus is re-apportioned among the remaining
    tasks by their shares, so the total equals
    ``min(capacity, sum(available))``.
    """
    if abs(math.fsum(final.values()) - 1.0) > 1e-9:
        raise ValueError("final shares must sum to 1")
    counts = largest_remainder(final, cfg.buffer_capacity)
    if available is None:
        return counts
    capped: dict[int, int] = {}
    budget = min(cfg.buffer_capacity, sum(int(available[p]) for p in final))
    while True:
        free = {p: final[p] for p in final if p not in capped}
        counts = dict(capped)
        counts.update(largest_remainder(free, budget - sum(capped.values())) if free else {})
        over = [p for p in free if counts[p] > available[p]]
        if not over:
            return dict(sorted(counts.items()))
        for p in over:
            capped[p] = int(available[p])
