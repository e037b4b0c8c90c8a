"""Independent reference computations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def linf_by_vertex_enumeration(A, b, lo, hi) -> float:
    """Smallest ``max|x_j|`` over ``A x = b, lo <= x <= hi`` by enumerating vertices.

    Works on the lifted variables ``(x, t)``: every vertex makes ``n + 1 - m``
    of the inequalities ``x_j <= t``, ``-x_j <= t``, ``x_j >= lo_j``,
    ``x_j <= hi_j`` and ``t >= 0`` tight. Returns ``inf`` when infeasible.
    """
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float)
    m, n = A.shape
    rows, rhs = [], []
    for j in range(n):
        e = np.zeros(n + 1)
        e[j], e[n] = 1.0, -1.0
        rows.append(e); rhs.append(0.0)  # x_j - t <= 0
        e = np.zeros(n + 1)
        e[j], e[n] = -1.0, -1.0
        rows.append(e); rhs.append(0.0)  # -x_j - t <= 0
        e = np.zeros(n + 1)
        e[j] = -1.0
        rows.append(e); rhs.append(-lo[j])  # -x_j <= -lo
        e = np.zeros(n + 1)
        e[j] = 1.0
        rows.append(e); rhs.append(hi[j])  # x_j <= hi
    e = np.zeros(n + 1)
    e[n] = -1.0
    rows.append(e); rhs.append(0.0)  # -t <= 0
    G, h = np.array(rows), np.array(rhs)
    Aeq = np.hstack([A, np.zeros((m, 1))])
    best = np.inf
    for active in itertools.combinations(range(len(G)), n + 1 - m):
        K = np.vstack([Aeq, G[list(active)]])
        if abs(np.linalg.det(K)) < 1e-12:
            continue
        z = np.linalg.solve(K, np.concatenate([b, h[list(active)]]))
        if np.all(G @ z <= h + 1e-9) and np.allclose(Aeq @ z, b, atol=1e-9):
            best = min(best, z[n])
    return best


def lagrangian_bound(c, A, b, lo, hi, y) -> float:
    """Lower bound on ``min c x, A x = b, lo <= x <= hi`` from multipliers ``y``."""
    r = np.asarray(c) - np.asarray(A).T @ y
    return float(b @ y + np.sum(np.where(r >= 0, r * lo, r * hi)))
