"""Cascaded controller: pose PID -> reference wrench, LPF + tilt table -> tilt
PID, and min-max thrust allocation at the *measured* tilt angles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .geom import Array, rot_to_rpy
from .platform import AllocationMaps, PlatformParams, build_allocation_maps
from .tiltopt import TiltTable

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PidGains:
    P: float
    I: float
    D: float

    def __post_init__(self):
        if min(self.P, self.I, self.D) < 0:
            raise ValueError("PID gains must be non-negative")


@dataclass(frozen=True)
class ControllerConfig:
    pid_trans: PidGains = PidGains(1.0, 0.1, 1.0)
    pid_rot: PidGains = PidGains(10.0, 10.0, 10.0)
    pid_tilt: PidGains = PidGains(20.0, 1.0, 5.0)
    lpf_time_constant: float = 1.0
    dt: float = 1e-3
    force_ref_clamp: float = 1.0
    integral_limit: float | None = None  # None: 4N * u_max

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.lpf_time_constant > 0:
            raise ValueError("lpf_time_constant must be positive")
        if not self.force_ref_clamp > 0:
            raise ValueError("force_ref_clamp must be positive")


@dataclass
class PidState:
    integral: Array | float = 0.0
    prev_error: Array | float = 0.0

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = 0.0


def pid_step(state: PidState, error, gains: PidGains, dt: float, rate=None, integral_limit=None):
    """One PID update with rectangular integration.

    ``rate`` replaces the finite-difference derivative when the error rate is
    known (e.g. from a velocity measurement). ``integral_limit`` bounds the
    magnitude of the integral contribution.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = np.asarray(error, dtype=float)
    state.integral = state.integral + e * dt
    if integral_limit is not None and gains.I > 0:
        bound = integral_limit / gains.I
        state.integral = np.clip(state.integral, -bound, bound)
    de = (e - state.prev_error) / dt if rate is None else np.asarray(rate, dtype=float)
    state.prev_error = e
    return gains.P * e + gains.I * state.integral + gains.D * de


class LowPassFilter:
    """Exactly discretized first-order lag ``1 / (tau s + 1)``."""

    def __init__(self, time_constant: float, dt: float, initial=None):
        self.decay = math.exp(-dt / time_constant)
        self.value = None if initial is None else np.asarray(initial, dtype=float)

    def step(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if self.value is None:
            self.value = x.copy()
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * x
        return self.value


def _catmull_rom_weights(t: float) -> Array:
    t2, t3 = t * t, t * t * t
    return 0.5 * np.array([-t3 + 2 * t2 - t, 3 * t3 - 5 * t2 + 2, -3 * t3 + 4 * t2 + t, t3 - t2])


def _axis_stencil(axis: Array, q: float) -> tuple[Array, Array]:
    n = len(axis)
    if n == 1:
        return np.array([0]), np.array([1.0])
    q = min(max(q, axis[0]), axis[-1])
    u = (q - axis[0]) / (axis[1] - axis[0])
    i = min(int(math.floor(u)), n - 2)
    t = u - i
    idx = np.clip(np.arange(i - 1, i + 3), 0, n - 1)
    return idx, _catmull_rom_weights(t)


class TiltLookup:
    """Bicubic (Catmull-Rom) interpolation of a tilt table, clamped to its range."""

    def __init__(self, table: TiltTable):
        self.table = table

    def __call__(self, fx: float, fy: float) -> Array:
        ix, wx = _axis_stencil(self.table.fx, fx)
        iy, wy = _axis_stencil(self.table.fy, fy)
        G = self.table.gamma[np.ix_(ix, iy)]
        return np.einsum("i,j,ijk->k", wx, wy, G)

    def in_range(self, fx: float, fy: float) -> bool:
        t = self.table
        return t.fx[0] <= fx <= t.fx[-1] and t.fy[0] <= fy <= t.fy[-1]


def allocate(maps: AllocationMaps, f_ref, tau_ref, tau_gamma_ref, u_max: float) -> tuple[Array, bool]:
    """Thrusts realizing the full reference with the smallest max-min spread."""
    target = np.concatenate(
        [np.asarray(f_ref, float), np.asarray(tau_ref, float), np.asarray(tau_gamma_ref, float).reshape(-1)]
    )
    M = maps.M_all
    res = lp.minimize_range(M, target, np.zeros(M.shape[1]), np.full(M.shape[1], u_max))
    if res.status is not lp.LpStatus.OPTIMAL:
        return np.full(M.shape[1], np.nan), False
    return res.x, True


@dataclass
class ControlOutput:
    f_p_ref: Array
    tau_p_ref: Array
    gamma_ref: Array
    tau_gamma_ref: Array
    u: Array
    allocation_feasible: bool
    f_p_nom: Array
    f_filtered: Array
    maps: AllocationMaps = field(repr=False)


class Controller:
    """Holds the loop states; call :meth:`step` once per control tick."""

    def __init__(self, params: PlatformParams, cfg: ControllerConfig, table: TiltTable):
        self.params = params
        self.cfg = cfg
        self.lookup = TiltLookup(table)
        self.trans = PidState()
        self.rot = PidState()
        self.tilt = PidState()
        self.lpf = LowPassFilter(cfg.lpf_time_constant, cfg.dt)
        limit = cfg.integral_limit
        self.integral_limit = params.u_max * params.n_rotors if limit is None else limit
        self.last_u = np.full(params.n_rotors, params.weight / params.n_rotors)

    def major_loop(self, p_err, v_err, rpy, omega, f_nom_w, disturbance_w, R_wp) -> tuple[Array, Array]:
        cfg = self.cfg
        corr = pid_step(self.trans, p_err, cfg.pid_trans, cfg.dt, rate=v_err, integral_limit=self.integral_limit)
        f_w = np.asarray(f_nom_w, float) + corr - np.asarray(disturbance_w, float)
        f_p = R_wp.T @ f_w
        f_p[:2] = np.clip(f_p[:2], -cfg.force_ref_clamp, cfg.force_ref_clamp)
        rpy = np.asarray(rpy, float)
        tau = pid_step(
            self.rot, -rpy, cfg.pid_rot, cfg.dt, rate=-np.asarray(omega, float), integral_limit=self.integral_limit
        )
        return f_p, tau

    def minor_loop(self, f_p_ref) -> tuple[Array, Array]:
        f_bar = self.lpf.step(np.asarray(f_p_ref, float)[:2])
        return self.lookup(f_bar[0], f_bar[1]), f_bar

    def tilt_loop(self, gamma_ref, gamma, gamma_dot) -> Array:
        cfg = self.cfg
        err = np.asarray(gamma_ref, float) - np.asarray(gamma, float)
        return pid_step(
            self.tilt, err, cfg.pid_tilt, cfg.dt, rate=-np.asarray(gamma_dot, float), integral_limit=self.integral_limit
        )

    def step(self, p, R_wp, v, omega, gamma, gamma_dot, p_ref, v_ref, a_ref, disturbance_w) -> ControlOutput:
        params = self.params
        f_nom_w = params.mass * np.asarray(a_ref, float) + params.weight * E3
        v_world = R_wp @ np.asarray(v, float)
        f_p_ref, tau_p_ref = self.major_loop(
            np.asarray(p_ref, float) - p,
            np.asarray(v_ref, float) - v_world,
            rot_to_rpy(R_wp),
            omega,
            f_nom_w,
            disturbance_w,
            R_wp,
        )
        gamma_ref, f_bar = self.minor_loop(f_p_ref)
        tau_gamma_ref = self.tilt_loop(gamma_ref, gamma, gamma_dot)
        # Allocation uses the measured tilt, not the reference.
        maps = build_allocation_maps(params, gamma)
        u, ok = allocate(maps, f_p_ref, tau_p_ref, tau_gamma_ref, params.u_max)
        if ok:
            self.last_u = u
        else:
            u = self.last_u.copy()
        return ControlOutput(
            f_p_ref=f_p_ref,
            tau_p_ref=tau_p_ref,
            gamma_ref=gamma_ref,
            tau_gamma_ref=tau_gamma_ref,
            u=u,
            allocation_feasible=ok,
            f_p_nom=R_wp.T @ f_nom_w,
            f_filtered=f_bar,
            maps=maps,
        )
