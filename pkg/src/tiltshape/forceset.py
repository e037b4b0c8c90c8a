"""Hoverable force set (HFS) queries and required force sets (RFS).

The HFS at a tilt configuration is the set of payload forces reachable with
rotor thrusts in ``[0, u_max]`` while the payload torque is exactly zero. It is
never built explicitly; every question about it is answered with an LP.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import lp
from .geom import Array
from .platform import AllocationMaps, PlatformParams, build_allocation_maps

MEM_TOL = 1e-7

# Box on the normalized thrusts handed to the L-inf solver. Anything needing
# more than this is reported infeasible, which already means "not included".
LINF_BOX = 10.0


@dataclass(frozen=True, eq=False)
class RfsSpec:
    vertices: Array

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.ndim != 2 or v.shape[1] != 3 or len(v) == 0:
            raise ValueError("RFS vertices must be a non-empty (k, 3) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("RFS vertices must be finite")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def cuboid(cls, center, half_width: float = 1.0) -> RfsSpec:
        """Axis-aligned box ``center +- half_width``; a single point when the width is zero."""
        if half_width < 0:
            raise ValueError("half_width must be non-negative")
        c = np.asarray(center, dtype=float).reshape(3)
        if half_width == 0:
            return cls(c[None, :])
        axes = [(ci - half_width, ci + half_width) for ci in c]
        return cls(np.array(list(itertools.product(*axes))))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True, eq=False)
class HfsQuery:
    maps: AllocationMaps
    u_max: float

    @classmethod
    def at(cls, params: PlatformParams, gamma) -> HfsQuery:
        return cls(build_allocation_maps(params, gamma), params.u_max)


@dataclass(frozen=True)
class Membership:
    included: bool
    linf: float
    u: Array | None

    def __iter__(self):
        # Allows ``included, linf = membership(q, v)``.
        return iter((self.included, self.linf))


def membership(q: HfsQuery, v) -> Membership:
    """Is ``v`` in the HFS? Solved as the L-inf problem on normalized thrusts."""
    v = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("force must be finite")
    half = 0.5 * q.u_max
    M = q.maps.M_wrench
    target = np.concatenate([v, np.zeros(3)])
    # u = half * (u_tilde + 1)
    A = half * M
    b = target - A.sum(axis=1)
    n = M.shape[1]
    res = lp.minimize_linf(A, b, np.full(n, -LINF_BOX), np.full(n, LINF_BOX))
    if not res.status is lp.LpStatus.OPTIMAL:
        return Membership(False, np.inf, None)
    u = half * (res.x + 1.0)
    return Membership(res.value <= 1.0 + MEM_TOL, res.value, u)


def hoverable(q: HfsQuery, f_eq) -> bool:
    return membership(q, f_eq).included


def count_included(q: HfsQuery, rfs: RfsSpec) -> int:
    return sum(1 for v in rfs.vertices if membership(q, v).included)


def support_points(q: HfsQuery, directions) -> Array:
    """For each direction ``d``, the HFS point maximizing ``d @ f``."""
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    M_f, M_tau = q.maps.M_f, q.maps.M_tau
    n = M_f.shape[1]
    out = np.empty((len(D), 3))
    for k, d in enumerate(D):
        if not np.any(d):
            raise ValueError("support directions must be nonzero")
        sol = lp.solve(lp.LpProblem.create(-(M_f.T @ d), M_tau, np.zeros(3), np.zeros(n), np.full(n, q.u_max)))
        if not sol.optimal:
            raise RuntimeError(f"support LP failed with status {sol.status.value}")
        out[k] = M_f @ sol.x
    return out


def fibonacci_directions(n: int) -> Array:
    """``n`` roughly uniform unit vectors on the sphere."""
    if n < 1:
        raise ValueError("n must be positive")
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5**0.5) * k
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
