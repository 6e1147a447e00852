"""Minimum-cost rectangular assignment (Hungarian method).

The solver pads the cost matrix to a square one with zero-cost dummy rows or
columns, runs the shortest-augmenting-path form of the Hungarian algorithm
with row/column potentials, and then picks, among all optimal assignments,
the lexicographically smallest sequence of ``(row, col)`` pairs. The last step
uses the optimal potentials: an assignment is optimal exactly when it only
uses zero reduced-cost ("tight") cells, so tie-breaking is a matching problem
on the tight graph.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError


def _hungarian_square(cost: np.ndarray):
    """Optimal assignment of a square matrix.

    Returns ``(col_of_row, u, v)`` with row potentials ``u`` and column
    potentials ``v`` such that ``cost - u[:, None] - v[None, :] >= 0``, with
    equality on assigned cells.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=np.int64)  # 1-based rows; 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[row_of_col[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _complete_matching(tight, rows, allowed_cols, seed):
    """Perfect matching of ``rows`` into ``allowed_cols`` over tight cells
    (Kuhn's augmenting paths), starting from the partial matching ``seed``.
    Returns ``{row: col}`` or ``None``."""
    owner = {c: r for r, c in seed.items() if c in allowed_cols}
    match = {r: c for c, r in owner.items()}

    def augment(r, seen):
        for c in np.flatnonzero(tight[r]):
            c = int(c)
            if c not in allowed_cols or c in seen:
                continue
            seen.add(c)
            if c not in owner or augment(owner[c], seen):
                owner[c] = r
                match[r] = c
                return True
        return False

    for r in rows:
        if r not in match and not augment(r, set()):
            return None
    return match


def hungarian_assign(cost) -> list:
    """Rows-to-columns assignment minimizing total cost.

    Returns ``min(n, m)`` ``(row, col)`` pairs sorted by row. Among equal-cost
    optima the lexicographically smallest pair sequence is returned.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    if cost.ndim != 2:
        raise InputError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix must be finite")
    n, m = cost.shape
    size = max(n, m)
    square = np.zeros((size, size))
    square[:n, :m] = cost

    col_of_row, u, v = _hungarian_square(square)
    reduced = square - u[:, None] - v[None, :]
    eps = 1e-9 * max(1.0, float(np.abs(square).max())) * size
    tight = reduced <= eps

    match = {r: int(c) for r, c in enumerate(col_of_row)}
    fixed_cols: set = set()
    for i in range(n):
        for c in np.flatnonzero(tight[i]):
            c = int(c)
            if c in fixed_cols:
                continue
            if c == match[i]:
                break
            rest = range(i + 1, size)
            allowed = set(range(size)) - fixed_cols - {c}
            seed = {r: match[r] for r in rest if match[r] != c}
            completed = _complete_matching(tight, rest, allowed, seed)
            if completed is not None:
                match = {r: match[r] for r in range(i)}
                match[i] = c
                match.update(completed)
                break
        fixed_cols.add(match[i])
    return [(i, match[i]) for i in range(n) if match[i] < m]


def assignment_cost(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[r, c] for r, c in pairs))
