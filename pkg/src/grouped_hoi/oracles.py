"""Brute-force reference implementations used to cross-check the fast routines in tests."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ConfigError

MAX_ENUMERATION = 7


def oracle_knn(scores, k: int, exclude_self: bool = True, descending: bool = False) -> list[list[int]]:
    """Per row: fully sort ``(score, column)`` pairs and keep the first ``k`` admissible columns."""
    s = np.asarray(scores, dtype=np.float64)
    out = []
    for i, row in enumerate(s):
        keyed = [((-v if descending else v), j) for j, v in enumerate(row) if not (exclude_self and j == i)]
        keyed.sort()
        out.append([j for _, j in keyed[:k]])
    return out


def oracle_assignment(cost) -> tuple[tuple[int, ...], float]:
    """Enumerate every injective row->column map; lowest cost, then lexicographically smallest.

    Costs are summed in row order, matching the fast solver's reported total.
    Refuses more than ``MAX_ENUMERATION`` rows.
    """
    c = np.asarray(cost, dtype=np.float64)
    g, q = c.shape
    if g > MAX_ENUMERATION or q > MAX_ENUMERATION + 2:
        raise ConfigError(f"instance {c.shape} too large for enumeration")
    if g == 0:
        return (), 0.0
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(q), g):
        total = float(sum(c[i, j] for i, j in enumerate(perm)))
        if total < best_cost - 1e-10 * (1 + abs(best_cost if math.isfinite(best_cost) else 0)):
            best, best_cost = perm, total
    return tuple(best), best_cost


def oracle_average_precision(flags, n_gt: int) -> float | None:
    """AP from the explicit PR curve: at every recall level take the best precision at that recall or beyond."""
    if n_gt <= 0:
        return None
    points = []
    tp = 0
    for rank, f in enumerate(flags, start=1):
        tp += bool(f)
        points.append((tp / n_gt, tp / rank))
    ap = 0.0
    prev_recall = 0.0
    for r, _ in points:
        if r > prev_recall:
            ap += (r - prev_recall) * max(p for rr, p in points if rr >= r)
            prev_recall = r
    return ap
