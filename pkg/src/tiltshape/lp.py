"""Dense two-phase simplex for small linear programs.

Problems have the form::

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                lo <= x <= hi        (infinite bounds allowed)

The core is a bounded-variable primal simplex on a dense tableau, compiled
with numba. Pricing is Dantzig's rule, falling back to Bland's rule during
long degenerate stretches. Problem sizes here are a few dozen rows and
columns, so the dense tableau is the fastest representation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .geom import Array

FEAS_TOL = 1e-9
OPT_TOL = 1e-8
PIVOT_TOL = 1e-9

_OPTIMAL, _INFEASIBLE, _UNBOUNDED, _ITER_LIMIT = 0, 1, 2, 3


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: Array
    A_eq: Array
    b_eq: Array
    lo: Array
    hi: Array

    @classmethod
    def create(cls, c, A_eq=None, b_eq=None, lo=None, hi=None) -> LpProblem:
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.size
        A = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
        b = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        lo = np.zeros(n) if lo is None else np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
        hi = np.full(n, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
        if A.shape != (b.size, n):
            raise ValueError(f"A_eq has shape {A.shape}, expected {(b.size, n)}")
        if not (np.isfinite(c).all() and np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("c, A_eq and b_eq must be finite (no NaN or inf)")
        # Also rejects NaN bounds, lo = +inf and hi = -inf.
        if not ((lo <= hi).all() and (lo < np.inf).all() and (hi > -np.inf).all()):
            raise ValueError("bounds must satisfy lo <= hi and admit a finite value")
        return cls(c, A, b, lo, hi)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: Array
    objective: float

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


_DEGENERATE_RUN = 50


@numba.njit(cache=True)
def _blocking(T, beta, basis, upper, i, q, delta, piv_tol):
    """Step length at which basic row ``i`` hits a bound (inf if never)."""
    a = delta * T[i, q]
    if a > piv_tol:
        return max(beta[i], 0.0) / a, a, False
    if a < -piv_tol and upper[basis[i]] < np.inf:
        return max(upper[basis[i]] - beta[i], 0.0) / (-a), -a, True
    return np.inf, 0.0, False


@numba.njit(cache=True)
def _ratio_exact(T, beta, basis, upper, q, delta, piv_tol):
    """Textbook ratio test; ties go to the lowest basic index (Bland)."""
    theta = upper[q]
    r = -1
    to_upper = False
    for i in range(T.shape[0]):
        ratio, a, hits_upper = _blocking(T, beta, basis, upper, i, q, delta, piv_tol)
        if a == 0.0:
            continue
        if ratio < theta or (ratio == theta and r >= 0 and basis[i] < basis[r]):
            theta = ratio
            r = i
            to_upper = hits_upper
    return r, theta, to_upper


@numba.njit(cache=True)
def _ratio_harris(T, beta, basis, upper, q, delta, piv_tol, feas_tol):
    """Two-pass ratio test: among rows blocking within bounds relaxed by
    ``feas_tol``, pivot on the largest entry. Avoids tiny pivots on ties."""
    m = T.shape[0]
    bound = np.inf
    for i in range(m):
        ratio, a, _ = _blocking(T, beta, basis, upper, i, q, delta, piv_tol)
        if a > 0.0:
            bound = min(bound, ratio + feas_tol / a)
    r = -1
    theta = np.inf
    to_upper = False
    big = 0.0
    for i in range(m):
        ratio, a, hits_upper = _blocking(T, beta, basis, upper, i, q, delta, piv_tol)
        if a > big and ratio <= bound:
            big = a
            r = i
            theta = ratio
            to_upper = hits_upper
    if upper[q] <= theta:
        # The entering variable reaches its own bound first.
        return -1, upper[q], False
    return r, theta, to_upper


@numba.njit(cache=True)
def _iterate(T, beta, d, basis, is_basic, upper, at_up, feas_tol, opt_tol, piv_tol, max_iter):
    m, N = T.shape
    degenerate = 0
    for _ in range(max_iter):
        # Dantzig pricing; Bland's lowest-index rule after a run of degenerate
        # pivots, which rules out cycling.
        bland = degenerate >= _DEGENERATE_RUN
        q = -1
        best = 0.0
        for j in range(N):
            if is_basic[j] or upper[j] <= 0.0:
                continue
            if (not at_up[j] and d[j] < -opt_tol) or (at_up[j] and d[j] > opt_tol):
                if bland:
                    q = j
                    break
                if abs(d[j]) > best:
                    best = abs(d[j])
                    q = j
        if q < 0:
            return _OPTIMAL
        delta = -1.0 if at_up[q] else 1.0
        if bland:
            r, theta, to_upper = _ratio_exact(T, beta, basis, upper, q, delta, piv_tol)
        else:
            r, theta, to_upper = _ratio_harris(T, beta, basis, upper, q, delta, piv_tol, feas_tol)
        if r < 0 and theta == np.inf:
            return _UNBOUNDED
        degenerate = degenerate + 1 if theta <= 0.0 else 0
        step = delta * theta
        for i in range(m):
            beta[i] -= step * T[i, q]
        if r < 0:
            at_up[q] = not at_up[q]
            continue
        entering_value = theta if delta > 0 else upper[q] - theta
        leaving = basis[r]
        is_basic[leaving] = False
        at_up[leaving] = to_upper
        beta[r] = entering_value
        piv = T[r, q]
        for j in range(N):
            T[r, j] /= piv
        for i in range(m):
            if i != r:
                f = T[i, q]
                if f != 0.0:
                    for j in range(N):
                        T[i, j] -= f * T[r, j]
        f = d[q]
        for j in range(N):
            d[j] -= f * T[r, j]
        basis[r] = q
        is_basic[q] = True
        at_up[q] = False
    return _ITER_LIMIT


@numba.njit(cache=True)
def _reduced_costs(T, cost, basis):
    m, N = T.shape
    d = cost.copy()
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            for j in range(N):
                d[j] -= cb * T[i, j]
    return d


@numba.njit(cache=True)
def _simplex(A, b, c, ub, feas_tol, opt_tol, piv_tol, max_iter):
    """Solve min c@y, A@y == b, 0 <= y <= ub. Returns (status, y, basis)."""
    m, n = A.shape
    N = n + m
    T = np.zeros((m, N))
    beta = np.zeros(m)
    for i in range(m):
        s = 1.0 if b[i] >= 0.0 else -1.0
        for j in range(n):
            T[i, j] = s * A[i, j]
        T[i, n + i] = 1.0
        beta[i] = s * b[i]
    upper = np.empty(N)
    upper[:n] = ub
    upper[n:] = np.inf
    at_up = np.zeros(N, dtype=np.bool_)
    is_basic = np.zeros(N, dtype=np.bool_)
    basis = np.empty(m, dtype=np.int64)
    for i in range(m):
        basis[i] = n + i

    # Slack crash: a +1 unit column whose row has no other claimant starts basic.
    claimed = np.zeros(m, dtype=np.bool_)
    for j in range(n):
        row = -1
        unit = True
        for i in range(m):
            v = T[i, j]
            if v != 0.0:
                if row >= 0 or v != 1.0:
                    unit = False
                    break
                row = i
        if unit and row >= 0 and not claimed[row] and beta[row] <= ub[j]:
            claimed[row] = True
            basis[row] = j
            upper[n + row] = 0.0
    for i in range(m):
        is_basic[basis[i]] = True

    cost = np.zeros(N)
    for i in range(m):
        if not claimed[i]:
            cost[n + i] = 1.0
    d = _reduced_costs(T, cost, basis)
    status = _iterate(T, beta, d, basis, is_basic, upper, at_up, feas_tol, opt_tol, piv_tol, max_iter)
    y = np.zeros(n)
    if status == _ITER_LIMIT:
        return status, y, basis

    scale = 1.0
    for i in range(m):
        scale = max(scale, abs(b[i]))
    infeas = 0.0
    for i in range(m):
        if basis[i] >= n:
            infeas += max(beta[i], 0.0)
    if infeas > feas_tol * scale:
        return _INFEASIBLE, y, basis

    # Artificials are pinned at zero for phase 2; basic ones leave on first touch.
    for k in range(n, N):
        upper[k] = 0.0
    cost2 = np.zeros(N)
    cost2[:n] = c
    d = _reduced_costs(T, cost2, basis)
    status = _iterate(T, beta, d, basis, is_basic, upper, at_up, feas_tol, opt_tol, piv_tol, max_iter)
    for j in range(n):
        if at_up[j]:
            y[j] = ub[j]
    for i in range(m):
        if basis[i] < n:
            y[basis[i]] = beta[i]
    return status, y, basis


def _to_standard(p: LpProblem):
    """Rewrite bounds as ``0 <= y <= ub``; free variables get a negative twin column."""
    lo, hi = p.lo, p.hi
    has_lo = np.isfinite(lo)
    only_hi = ~has_lo & np.isfinite(hi)
    free = ~has_lo & ~only_hi
    sign = np.where(only_hi, -1.0, 1.0)
    shift = np.where(has_lo, lo, np.where(only_hi, hi, 0.0))
    A = np.hstack([p.A_eq * sign, -p.A_eq[:, free]])
    b = p.b_eq - p.A_eq @ shift
    c = np.concatenate([p.c * sign, -p.c[free]])
    ub = np.concatenate([np.where(has_lo, hi - lo, np.inf), np.full(int(free.sum()), np.inf)])
    return np.ascontiguousarray(A), b, c, ub, (sign, shift, free)


def solve(p: LpProblem, max_iter: int = 100_000) -> LpSolution:
    A, b, c, ub, (sign, shift, free) = _to_standard(p)
    status, y, basis = _simplex(A, b, c, ub, FEAS_TOL, OPT_TOL, PIVOT_TOL, max_iter)
    n = p.c.size
    if status == _ITER_LIMIT:
        raise RuntimeError("simplex iteration limit reached")
    if status == _INFEASIBLE:
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), np.nan)
    if status == _UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, np.full(n, np.nan), -np.inf)
    val = y[:n].copy()
    val[free] -= y[n:]
    x = np.clip(shift + sign * val, p.lo, p.hi)
    if p.b_eq.size:
        r = p.b_eq - p.A_eq @ x
        if np.abs(r).max() > 1e-12 * (1.0 + np.abs(p.b_eq).max()):
            in_basis = np.zeros(A.shape[1], dtype=bool)
            in_basis[basis[basis < A.shape[1]]] = True
            active = in_basis[:n].copy()
            active[free] |= in_basis[n:]
            x = _refine(p, x, r, active)
    return LpSolution(LpStatus.OPTIMAL, x, float(p.c @ x))


def _refine(p: LpProblem, x: Array, r: Array, active: Array) -> Array:
    """One least-squares correction of the basic entries to shrink ``A x - b``."""
    if not active.any():
        return x
    dx, *_ = np.linalg.lstsq(p.A_eq[:, active], r, rcond=None)
    y = x.copy()
    y[active] += dx
    if np.all(y >= p.lo) and np.all(y <= p.hi):
        if np.abs(p.A_eq @ y - p.b_eq).max() <= np.abs(r).max():
            return y
    return x


@dataclass(frozen=True, eq=False)
class LinfResult:
    status: LpStatus
    x: Array
    value: float


@dataclass(frozen=True, eq=False)
class RangeResult:
    status: LpStatus
    x: Array
    value: float


def minimize_linf(A_eq, b_eq, lo, hi) -> LinfResult:
    """Smallest ``max_j |x_j|`` over ``A_eq x = b_eq`` inside a bounded box."""
    A = np.atleast_2d(np.asarray(A_eq, dtype=float))
    m, n = A.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("minimize_linf needs a bounded box")
    t_max = float(max(np.abs(lo).max(), np.abs(hi).max()))
    # Variables: x (n), t, s_plus (n), s_minus (n).
    A_big = np.zeros((m + 2 * n, 3 * n + 1))
    A_big[:m, :n] = A
    idx = np.arange(n)
    A_big[m + idx, idx] = 1.0
    A_big[m + n + idx, idx] = -1.0
    A_big[m:, n] = -1.0
    A_big[m + idx, n + 1 + idx] = 1.0
    A_big[m + n + idx, 2 * n + 1 + idx] = 1.0
    b_big = np.concatenate([np.asarray(b_eq, dtype=float).reshape(-1), np.zeros(2 * n)])
    c = np.zeros(3 * n + 1)
    c[n] = 1.0
    big_lo = np.concatenate([lo, [0.0], np.zeros(2 * n)])
    big_hi = np.concatenate([hi, [t_max], np.full(2 * n, np.inf)])
    sol = solve(LpProblem.create(c, A_big, b_big, big_lo, big_hi))
    if not sol.optimal:
        return LinfResult(sol.status, np.full(n, np.nan), np.nan)
    x = sol.x[:n]
    return LinfResult(sol.status, x, float(np.abs(x).max()) if n else 0.0)


def minimize_range(A_eq, b_eq, lo, hi) -> RangeResult:
    """Smallest ``max(x) - min(x)`` over ``A_eq x = b_eq`` inside a bounded box."""
    A = np.atleast_2d(np.asarray(A_eq, dtype=float))
    m, n = A.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("minimize_range needs a bounded box")
    if n and np.all(lo == lo[0]) and np.all(hi == hi[0]):
        return _minimize_range_uniform(A, np.asarray(b_eq, dtype=float).reshape(-1), float(lo[0]), float(hi[0]))
    # Variables: x (n), s_hi, s_lo, gap_hi (n), gap_lo (n).
    A_big = np.zeros((m + 2 * n, 3 * n + 2))
    A_big[:m, :n] = A
    idx = np.arange(n)
    A_big[m + idx, idx] = 1.0
    A_big[m + n + idx, idx] = 1.0
    A_big[m : m + n, n] = -1.0
    A_big[m + n :, n + 1] = -1.0
    A_big[m + idx, n + 2 + idx] = 1.0
    A_big[m + n + idx, 2 * n + 2 + idx] = -1.0
    b_big = np.concatenate([np.asarray(b_eq, dtype=float).reshape(-1), np.zeros(2 * n)])
    c = np.zeros(3 * n + 2)
    c[n], c[n + 1] = 1.0, -1.0
    s_lo_bound, s_hi_bound = float(lo.min()), float(hi.max())
    big_lo = np.concatenate([lo, [s_lo_bound, s_lo_bound], np.zeros(2 * n)])
    big_hi = np.concatenate([hi, [s_hi_bound, s_hi_bound], np.full(2 * n, np.inf)])
    sol = solve(LpProblem.create(c, A_big, b_big, big_lo, big_hi))
    if not sol.optimal:
        return RangeResult(sol.status, np.full(n, np.nan), np.nan)
    x = sol.x[:n]
    return RangeResult(sol.status, x, float(x.max() - x.min()))


def _minimize_range_uniform(A: Array, b: Array, lo: float, hi: float) -> RangeResult:
    """Same problem when every variable shares the box ``[lo, hi]``.

    Writes ``x = s + z`` with ``0 <= z <= w``; then ``lo <= s`` and
    ``s + w <= hi`` are exactly the box constraints, which needs far fewer rows.
    """
    m, n = A.shape
    # Variables: s, w, z (n), gap (n), slack. Rows: A x = b, z + gap - w = 0, s + w + slack = hi.
    A_big = np.zeros((m + n + 1, 2 * n + 3))
    A_big[:m, 0] = A.sum(axis=1)
    A_big[:m, 2 : 2 + n] = A
    idx = np.arange(n)
    A_big[m + idx, 1] = -1.0
    A_big[m + idx, 2 + idx] = 1.0
    A_big[m + idx, 2 + n + idx] = 1.0
    A_big[m + n, [0, 1, 2 * n + 2]] = 1.0
    b_big = np.concatenate([b, np.zeros(n), [hi]])
    c = np.zeros(2 * n + 3)
    c[1] = 1.0
    span = hi - lo
    big_lo = np.concatenate([[lo, 0.0], np.zeros(2 * n + 1)])
    big_hi = np.concatenate([[hi, span], np.full(n, span), np.full(n + 1, np.inf)])
    sol = solve(LpProblem.create(c, A_big, b_big, big_lo, big_hi))
    if not sol.optimal:
        return RangeResult(sol.status, np.full(n, np.nan), np.nan)
    x = np.clip(sol.x[0] + sol.x[2 : 2 + n], lo, hi)
    return RangeResult(sol.status, x, float(x.max() - x.min()))
