"""Exact discrete optimal transport.

A dense transportation simplex (north-west corner start, MODI potentials,
spanning-tree pivots) for desk-sized problems, and the sorted quantile
coupling for measures on the real line.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .errors import InvalidArgument, NumericalFailure


def _northwest_corner(a, b):
    n, m = len(a), len(b)
    a, b = a.copy(), b.copy()
    cells, flows = [], []
    i = j = 0
    while True:
        x = min(a[i], b[j])
        cells.append((i, j))
        flows.append(x)
        a[i] -= x
        b[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif a[i] < b[j]:
            i += 1
        elif a[i] > b[j]:
            j += 1
        else:
            i += 1  # degenerate: next cell carries a zero flow
    return cells, flows


def _tree_adjacency(cells, n, m):
    adj = [[] for _ in range(n + m)]
    for k, (i, j) in enumerate(cells):
        adj[i].append((n + j, k))
        adj[n + j].append((i, k))
    return adj


def transport_plan(a, b, cost, max_iter: int | None = None):
    """Minimise ``<plan, cost>`` over couplings of ``a`` and ``b``.

    Returns ``(plan, total_cost)``.  Masses are rescaled to a common total.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (a.size, b.size):
        raise InvalidArgument("cost matrix shape does not match the marginals")
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidArgument("marginals must be non-negative")
    plan_full = np.zeros(cost.shape)
    rows, cols = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    if rows.size == 0 or cols.size == 0:
        return plan_full, 0.0
    a, b = a[rows], b[cols] * (a[rows].sum() / b[cols].sum())
    c = cost[np.ix_(rows, cols)]
    n, m = a.size, b.size

    cells, flows = _northwest_corner(a, b)
    flows = np.array(flows)
    tol = 1e-12 * (1.0 + np.abs(c).max())
    max_iter = max_iter or 50 * (n + m) ** 2
    for _ in range(max_iter):
        adj = _tree_adjacency(cells, n, m)
        # potentials: u_i + v_j = c_ij on the tree
        pot = np.full(n + m, np.nan)
        pot[0] = 0.0
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb, k in adj[node]:
                if np.isnan(pot[nb]):
                    i, j = cells[k]
                    pot[nb] = c[i, j] - pot[node]
                    queue.append(nb)
        red = c - pot[:n, None] - pot[None, n:]
        flat = int(np.argmin(red))
        if red.flat[flat] >= -tol:
            break
        ei, ej = divmod(flat, m)
        # tree path from row ei to column ej
        parent = {ei: (None, None)}
        queue = deque([ei])
        target = n + ej
        while queue and target not in parent:
            node = queue.popleft()
            for nb, k in adj[node]:
                if nb not in parent:
                    parent[nb] = (node, k)
                    queue.append(nb)
        path = []
        node = target
        while parent[node][0] is not None:
            node, k = parent[node]
            path.append(k)
        minus = path[0::2]
        plus = path[1::2]
        theta_pos = min(minus, key=lambda k: (flows[k], k))
        theta = flows[theta_pos]
        flows[minus] -= theta
        flows[plus] += theta
        cells[theta_pos] = (ei, ej)
        flows[theta_pos] = theta
    else:
        raise NumericalFailure("transport simplex did not converge")

    plan = np.zeros((n, m))
    for (i, j), f in zip(cells, flows):
        plan[i, j] += max(f, 0.0)
    plan_full[np.ix_(rows, cols)] = plan
    return plan_full, float((plan * c).sum())


def quantile_cost(x, wx, y, wy, p: float) -> float:
    """``W_p^p`` between two measures on the real line via the monotone coupling."""
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, wx = np.asarray(x, float)[ox], np.asarray(wx, float)[ox]
    y, wy = np.asarray(y, float)[oy], np.asarray(wy, float)[oy]
    wy = wy * (wx.sum() / wy.sum())
    cx, cy = np.cumsum(wx), np.cumsum(wy)
    cuts = np.union1d(cx, cy)
    cuts = cuts[cuts <= min(cx[-1], cy[-1])]
    lo = np.concatenate([[0.0], cuts[:-1]])
    mid = 0.5 * (lo + cuts)
    ix = np.minimum(np.searchsorted(cx, mid), x.size - 1)
    iy = np.minimum(np.searchsorted(cy, mid), y.size - 1)
    return float(np.sum((cuts - lo) * np.abs(x[ix] - y[iy]) ** p))
