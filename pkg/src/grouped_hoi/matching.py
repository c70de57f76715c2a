"""Minimum-cost injective assignment of ground truths (rows) to query slots (columns)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class Assignment:
    gt_to_query: tuple[int, ...]
    cost: float

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.gt_to_query))


def _solve(cost: np.ndarray):
    """Shortest-augmenting-path Hungarian for ``n <= m``.

    Returns ``(col_of_row, u, v)`` with ``u[i] + v[j] <= cost[i, j]``, equality
    on the chosen edges and ``v[j] == 0`` on unused columns.
    """
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j
    way = np.zeros(m + 1, dtype=np.int64)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _optimal_cost(cost: np.ndarray) -> float:
    if cost.shape[0] == 0:
        return 0.0
    cols, _, _ = _solve(cost)
    return float(sum(cost[i, c] for i, c in enumerate(cols)))


def hungarian_match(cost) -> Assignment:
    """Optimal assignment of every row to a distinct column.

    Among optimal assignments the lexicographically smallest sequence
    ``(q_0, q_1, ...)`` is returned.  Ties are detected with a tolerance of
    ``1e-10 * (1 + |optimum|)``.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise DimensionError(f"cost must be 2-D, got shape {c.shape}")
    g, q = c.shape
    if g > q:
        raise DimensionError(f"more ground truths ({g}) than queries ({q})")
    if g == 0:
        return Assignment((), 0.0)
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains non-finite entries")
    cols, u, v = _solve(c)
    best = float(sum(c[i, cols[i]] for i in range(g)))
    tol = 1e-10 * (1.0 + abs(best))
    reduced = c - u[:, None] - v[None, :]
    current = [int(x) for x in cols]
    used: set[int] = set()
    fixed_cost = 0.0
    for i in range(g):
        for j in np.flatnonzero(reduced[i] <= tol):
            j = int(j)
            if j in used:
                continue
            if j == current[i]:
                break
            rest_rows = list(range(i + 1, g))
            rest_cols = [x for x in range(q) if x not in used and x != j]
            sub = c[np.ix_(rest_rows, rest_cols)]
            if fixed_cost + c[i, j] + _optimal_cost(sub) <= best + tol:
                if rest_rows:
                    sub_cols, _, _ = _solve(sub)
                    current[i + 1:] = [rest_cols[k] for k in sub_cols]
                current[i] = j
                break
        used.add(current[i])
        fixed_cost += c[i, current[i]]
    total = float(sum(c[i, current[i]] for i in range(g)))
    return Assignment(tuple(current), total)
