"""Closed-loop simulation of the payload and hinge dynamics under the controller."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .control import Controller, ControllerConfig
from .geom import Array, hat, orthonormalize, rot_to_rpy, rpy_to_rot
from .platform import PlatformParams
from .tiltopt import TiltTable

E3 = np.array([0.0, 0.0, 1.0])

MAX_INFEASIBLE_STEPS = 10

CSV_COLUMNS = (
    ["t", "px", "py", "pz", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz"]
    + [f"g{i}" for i in range(1, 5)]
    + [f"gref{i}" for i in range(1, 5)]
    + ["frefx", "frefy", "frefz", "fnomx", "fnomy", "fnomz"]
    + [f"u{i}" for i in range(1, 17)]
    + ["feasible", "wind"]
)


class SimError(RuntimeError):
    pass


class TableRangeError(SimError):
    """The scenario asks for lateral forces outside the tilt table."""


class AllocationInfeasible(SimError):
    def __init__(self, message: str, log: SimLog):
        super().__init__(message)
        self.log = log


@dataclass
class SimState:
    p: Array  # world position
    R: Array  # payload attitude R_wp
    v: Array  # payload-frame velocity
    omega: Array  # payload-frame angular velocity
    gamma: Array
    gamma_dot: Array
    t: float = 0.0

    @classmethod
    def at_rest(cls, gamma, p=(0.0, 0.0, 0.0)) -> SimState:
        g = np.asarray(gamma, dtype=float).copy()
        return cls(
            p=np.asarray(p, dtype=float).copy(),
            R=np.eye(3),
            v=np.zeros(3),
            omega=np.zeros(3),
            gamma=g,
            gamma_dot=np.zeros_like(g),
        )

    def pack(self) -> Array:
        return np.concatenate([self.p, self.R.ravel(), self.v, self.omega, self.gamma, self.gamma_dot])

    @classmethod
    def unpack(cls, x: Array, t: float) -> SimState:
        n = (len(x) - 18) // 2
        return cls(
            p=x[0:3].copy(),
            R=x[3:12].reshape(3, 3).copy(),
            v=x[12:15].copy(),
            omega=x[15:18].copy(),
            gamma=x[18 : 18 + n].copy(),
            gamma_dot=x[18 + n :].copy(),
            t=t,
        )


@dataclass(frozen=True)
class StateDerivative:
    dp: Array
    dR: Array
    dv: Array
    domega: Array
    dgamma: Array
    ddgamma: Array

    def pack(self) -> Array:
        return np.concatenate([self.dp, self.dR.ravel(), self.dv, self.domega, self.dgamma, self.ddgamma])


def _cross(a: Array, b: Array) -> Array:
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


class _Rhs:
    """Right-hand side on the packed state with inputs frozen for one step."""

    def __init__(self, params: PlatformParams, wrench, tau_gamma, disturbance_w):
        w = np.asarray(wrench, dtype=float)
        self.m = params.mass
        self.mg = params.weight
        self.J = params.J
        self.J_inv = np.linalg.inv(self.J)
        self.f = w[:3]
        self.tau = w[3:]
        self.ddgamma = np.asarray(tau_gamma, dtype=float) / np.asarray(params.joint_inertia)
        self.d = np.asarray(disturbance_w, dtype=float)

    def __call__(self, x: Array) -> Array:
        n = len(self.ddgamma)
        R = x[3:12].reshape(3, 3)
        v, om = x[12:15], x[15:18]
        f = self.f + self.d @ R  # R^T d
        dv = (f - self.m * _cross(om, v) - self.mg * R[2]) / self.m  # R[2] = R^T e3
        domega = self.J_inv @ (self.tau - _cross(om, self.J @ om))
        out = np.empty_like(x)
        out[0:3] = R @ v
        out[3:12] = (R @ hat(om)).ravel()
        out[12:15] = dv
        out[15:18] = domega
        out[18 : 18 + n] = x[18 + n :]
        out[18 + n :] = self.ddgamma
        return out


def dynamics_derivative(
    state: SimState, wrench, tau_gamma, params: PlatformParams, disturbance_w=(0.0, 0.0, 0.0)
) -> StateDerivative:
    """Newton-Euler payload dynamics plus decoupled hinge dynamics.

    ``wrench`` is the rotor wrench ``[f_p; tau_p]`` in the payload frame and
    ``disturbance_w`` an extra world-frame force.
    """
    d = _Rhs(params, wrench, tau_gamma, disturbance_w)(state.pack())
    n = len(state.gamma)
    return StateDerivative(d[0:3], d[3:12].reshape(3, 3), d[12:15], d[15:18], d[18 : 18 + n], d[18 + n :])


def rk4_step(state: SimState, wrench, tau_gamma, params: PlatformParams, dt: float, disturbance_w=(0.0, 0.0, 0.0)) -> SimState:
    """Classical RK4 with the inputs held over the step; R is re-orthonormalized after."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = _Rhs(params, wrench, tau_gamma, disturbance_w)
    x0 = state.pack()
    k1 = f(x0)
    k2 = f(x0 + 0.5 * dt * k1)
    k3 = f(x0 + 0.5 * dt * k2)
    k4 = f(x0 + dt * k3)
    out = SimState.unpack(x0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), state.t + dt)
    out.R = orthonormalize(out.R)
    return out


def mechanical_energy(state: SimState, params: PlatformParams) -> float:
    """Kinetic plus gravitational energy of the payload (hinges excluded)."""
    J = params.J
    return float(
        0.5 * params.mass * state.v @ state.v
        + 0.5 * state.omega @ J @ state.omega
        + params.weight * state.p[2]
    )


@dataclass(frozen=True)
class DisturbanceZone:
    force: tuple[float, float, float] = (0.0, 0.5, 0.0)
    x_range: tuple[float, float] = (1.0, 4.0)

    def __post_init__(self):
        lo, hi = self.x_range
        if not lo < hi:
            raise ValueError("zone needs x_lo < x_hi")

    @classmethod
    def none(cls) -> DisturbanceZone:
        return cls((0.0, 0.0, 0.0), (0.0, 1.0))


def wind_force(zone: DisturbanceZone | None, p_w) -> Array:
    if zone is None:
        return np.zeros(3)
    lo, hi = zone.x_range
    x = float(p_w[0])
    return np.array(zone.force, dtype=float) if lo <= x <= hi else np.zeros(3)


def _smoothstep(s: float) -> tuple[float, float, float]:
    """Quintic rest-to-rest ramp on [0, 1] and its first two derivatives."""
    s = min(max(s, 0.0), 1.0)
    return (
        s**3 * (10 - 15 * s + 6 * s * s),
        30 * s * s * (1 - s) ** 2,
        60 * s * (1 - s) * (1 - 2 * s),
    )


@dataclass(frozen=True)
class Trajectory:
    kind: str
    duration: float
    distance: float = 5.0
    amplitude: float = 1.0

    def __call__(self, t: float) -> tuple[Array, Array, Array]:
        """Reference ``(p, v, a)`` at time ``t``; held at the end point afterwards."""
        if self.kind == "hover":
            z = np.zeros(3)
            return z, z.copy(), z.copy()
        T = self.duration
        s, ds, dds = _smoothstep(t / T)
        ds, dds = ds / T, dds / T**2
        # y follows a full cosine bump driven by the same ramp.
        th = 2 * math.pi * s
        A = 0.5 * self.amplitude
        p = np.array([self.distance * s, A * (1 - math.cos(th)), 0.0])
        v = np.array([self.distance * ds, A * math.sin(th) * 2 * math.pi * ds, 0.0])
        a = np.array(
            [
                self.distance * dds,
                A * (math.cos(th) * (2 * math.pi * ds) ** 2 + math.sin(th) * 2 * math.pi * dds),
                0.0,
            ]
        )
        return p, v, a

    def max_lateral_force(self, mass: float, zone: DisturbanceZone | None = None, samples: int = 4001) -> float:
        """Largest lateral component of ``m a_ref - wind`` along the path."""
        worst = 0.0
        for t in np.linspace(0.0, self.duration, samples):
            p, _, a = self(t)
            f = mass * a - wind_force(zone, p)
            worst = max(worst, float(np.max(np.abs(f[:2]))))
        return worst


TRAJECTORY_KINDS = ("sweep", "hover")


def make_trajectory(
    kind: str,
    duration: float,
    params: PlatformParams,
    *,
    distance: float = 5.0,
    amplitude: float = 1.0,
    force_limit: float = 1.0,
) -> Trajectory:
    """``"sweep"``: rest-to-rest run along x over ``distance`` with one lateral bump.

    Raises ``ValueError`` when the nominal lateral force leaves ``force_limit``.
    """
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    if not duration > 0:
        raise ValueError("duration must be positive")
    traj = Trajectory(kind, float(duration), float(distance), float(amplitude))
    if traj.max_lateral_force(params.mass) > force_limit:
        raise ValueError("trajectory needs lateral force beyond the table range")
    return traj


@dataclass
class SimLog:
    rows: list = field(default_factory=list)
    p_ref: list = field(default_factory=list)

    def append(self, row: list, p_ref: Array) -> None:
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError("log time must increase")
        self.rows.append(row)
        self.p_ref.append(np.asarray(p_ref, dtype=float))

    def __len__(self) -> int:
        return len(self.rows)

    def array(self) -> Array:
        return np.array(self.rows, dtype=float)

    def column(self, name: str) -> Array:
        return self.array()[:, CSV_COLUMNS.index(name)]

    def position_errors(self) -> Array:
        a = self.array()
        return np.linalg.norm(a[:, 1:4] - np.array(self.p_ref), axis=1)

    def orientation_errors_deg(self) -> Array:
        """Rotation angle between attitude and the level reference, in degrees."""
        out = []
        for r, p, y in self.array()[:, 4:7]:
            R = rpy_to_rot(r, p, y)
            # atan2 form keeps precision for tiny angles, unlike acos of the trace.
            s = 0.5 * math.hypot(R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1])
            c = 0.5 * (np.trace(R) - 1.0)
            out.append(math.degrees(math.atan2(s, c)))
        return np.array(out)

    @property
    def infeasible_steps(self) -> int:
        return int(np.sum(self.column("feasible") == 0)) if self.rows else 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return repr(float(v))


@dataclass(frozen=True)
class Summary:
    max_position_error: float
    max_orientation_error_deg: float
    infeasible_steps: int
    steps: int


def summarize(log: SimLog) -> Summary:
    return Summary(
        float(log.position_errors().max()),
        float(log.orientation_errors_deg().max()),
        log.infeasible_steps,
        len(log) - 1,
    )


def check_table_range(table: TiltTable, trajectory: Trajectory, zone: DisturbanceZone | None, mass: float) -> None:
    need = trajectory.max_lateral_force(mass, zone)
    have = min(-table.fx[0], table.fx[-1], -table.fy[0], table.fy[-1])
    if need > have + 1e-12:
        raise TableRangeError(f"scenario needs lateral force {need:.3f} N, table covers +-{have:.3f} N")


def run(
    params: PlatformParams,
    ctrl_cfg: ControllerConfig,
    table: TiltTable,
    trajectory: Trajectory,
    zone: DisturbanceZone | None,
    dt: float,
    duration: float,
    *,
    max_infeasible_steps: int = MAX_INFEASIBLE_STEPS,
) -> SimLog:
    """Simulate from rest at the start of ``trajectory``.

    Row ``k`` of the log holds the state at ``t_k`` and the control held over
    ``[t_k, t_k + dt]``. The controller sees the exact state and the exact
    wind force.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if not math.isclose(ctrl_cfg.dt, dt):
        raise ValueError("controller and simulation dt differ")
    check_table_range(table, trajectory, zone, params.mass)

    ctrl = Controller(params, ctrl_cfg, table)
    p0, _, a0 = trajectory(0.0)
    f0 = params.mass * a0 - wind_force(zone, p0)
    state = SimState.at_rest(ctrl.lookup(f0[0], f0[1]), p0)
    n_steps = int(round(duration / dt))
    log = SimLog()
    streak = 0
    for k in range(n_steps + 1):
        t = k * dt
        state.t = t
        p_ref, v_ref, a_ref = trajectory(t)
        wind = wind_force(zone, state.p)
        out = ctrl.step(state.p, state.R, state.v, state.omega, state.gamma, state.gamma_dot, p_ref, v_ref, a_ref, wind)
        log.append(
            [t, *state.p, *rot_to_rpy(state.R), *state.v, *state.omega, *state.gamma, *out.gamma_ref, *out.f_p_ref, *out.f_p_nom, *out.u, out.allocation_feasible, bool(np.any(wind))],
            p_ref,
        )
        streak = 0 if out.allocation_feasible else streak + 1
        if streak > max_infeasible_steps:
            raise AllocationInfeasible(f"allocation infeasible for {streak} consecutive steps at t={t:.3f} s", log)
        if k == n_steps:
            break
        # Applied wrench comes from the maps at the current tilt.
        u = out.u
        wrench = out.maps.M_wrench @ u
        tau_gamma = out.maps.M_gamma @ u
        state = rk4_step(state, wrench, tau_gamma, params, dt, wind)
    return log


__all__ = [
    "AllocationInfeasible",
    "CSV_COLUMNS",
    "DisturbanceZone",
    "SimLog",
    "SimState",
    "Summary",
    "TableRangeError",
    "Trajectory",
    "dynamics_derivative",
    "make_trajectory",
    "mechanical_energy",
    "rk4_step",
    "run",
    "summarize",
    "wind_force",
]
