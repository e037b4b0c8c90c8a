"""Platform geometry and the rotor-thrust allocation maps.

Rotor thrusts ``u`` (4 per UAV, UAV-major ordering) map linearly to the payload
force ``f_p = M_f u``, the payload torque ``tau_p = M_tau u`` and the hinge
torques ``tau_gamma = M_gamma u``, all depending on the tilt vector ``gamma``.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geom import Array, rot_x, rot_z

# The hinge axis X_q of each UAV is tangential: at gamma = 0 the UAV's Y axis
# points back at the payload centre, so the UAV frame is yawed a quarter turn
# past the radial direction alpha_i.
HINGE_YAW_OFFSET = math.pi / 2

# Removes the hinge-axis torque from a UAV wrench before it reaches the payload.
PAYLOAD_MASK = np.diag([1.0, 1.0, 1.0, 0.0, 1.0, 1.0])


def _four(value: float) -> tuple[float, ...]:
    return (value,) * 4


@dataclass(frozen=True)
class PlatformParams:
    """Physical constants of the platform (defaults reproduce the reference setup)."""

    n_uavs: int = 4
    mass: float = 2.5
    inertia: tuple[tuple[float, ...], ...] = ((0.05, 0.0, 0.0), (0.0, 0.05, 0.0), (0.0, 0.0, 0.05))
    joint_inertia: tuple[float, ...] = _four(0.005)
    arm_len: tuple[float, ...] = _four(0.22)
    arm_angle: tuple[float, ...] = field(
        default_factory=lambda: tuple(i * math.pi / 2 for i in range(4))
    )
    rotor_offset: float = 0.08
    drag_ratio: float = 0.011
    u_max: float = 4.0
    gravity: float = 9.81

    def __post_init__(self):
        n = self.n_uavs
        if n < 1:
            raise ValueError("n_uavs must be at least 1")
        for name in ("joint_inertia", "arm_len", "arm_angle"):
            values = getattr(self, name)
            object.__setattr__(self, name, tuple(float(v) for v in values))
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries")
        object.__setattr__(
            self, "inertia", tuple(tuple(float(v) for v in row) for row in self.inertia)
        )
        for name in ("mass", "rotor_offset", "drag_ratio", "u_max", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if min(self.joint_inertia) <= 0 or min(self.arm_len) <= 0:
            raise ValueError("joint inertias and arm lengths must be positive")
        J = self.J
        if J.shape != (3, 3) or not np.allclose(J, J.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("inertia must be positive definite")
        wrapped = [a % (2 * math.pi) for a in self.arm_angle]
        for i in range(n):
            for j in range(i + 1, n):
                d = abs(wrapped[i] - wrapped[j])
                if min(d, 2 * math.pi - d) < 1e-12:
                    raise ValueError("arm angles must be pairwise distinct")

    @property
    def J(self) -> Array:
        return np.array(self.inertia, dtype=float)

    @property
    def weight(self) -> float:
        return self.mass * self.gravity

    @property
    def n_rotors(self) -> int:
        return 4 * self.n_uavs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inertia"] = [list(r) for r in self.inertia]
        for k in ("joint_inertia", "arm_len", "arm_angle"):
            d[k] = list(d[k])
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class AllocationMaps:
    M_f: Array
    M_tau: Array
    M_gamma: Array

    @property
    def M_all(self) -> Array:
        return np.vstack([self.M_f, self.M_tau, self.M_gamma])

    @property
    def M_wrench(self) -> Array:
        """``[M_f; M_tau]``, the rotor-to-payload-wrench map."""
        return np.vstack([self.M_f, self.M_tau])


def uav_wrench_matrix(params: PlatformParams) -> Array:
    """6x4 map from one UAV's rotor thrusts to its wrench in the UAV frame."""
    r, k = params.rotor_offset, params.drag_ratio
    return np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
            [r, r, -r, -r],
            [-r, r, r, -r],
            [k, -k, k, -k],
        ]
    )


def joint_torque_row(uav_wrench) -> float:
    """Torque about the hinge axis X_q carried by a UAV-frame wrench."""
    return float(np.asarray(uav_wrench, dtype=float)[3])


def uav_pose(params: PlatformParams, i: int, gamma_i: float) -> tuple[Array, Array]:
    """Rotation and position of UAV ``i`` in the payload frame."""
    alpha = params.arm_angle[i]
    p = rot_z(alpha) @ np.array([params.arm_len[i], 0.0, 0.0])
    R = rot_z(alpha + HINGE_YAW_OFFSET) @ rot_x(gamma_i)
    return R, p


def _check_gamma(params: PlatformParams, gamma) -> Array:
    g = np.asarray(gamma, dtype=float).reshape(-1)
    if g.shape != (params.n_uavs,):
        raise ValueError(f"gamma must have {params.n_uavs} entries, got {g.shape}")
    # NaN fails the comparison too.
    if not (np.abs(g) <= math.pi / 2 + 1e-12).all():
        if not np.isfinite(g).all():
            raise ValueError("gamma must be finite")
        raise ValueError("tilt angles must satisfy |gamma_i| <= pi/2")
    return g


@functools.lru_cache(maxsize=32)
def _layout(params: PlatformParams) -> tuple[Array, Array, Array]:
    """Untilted UAV attitudes (n, 3, 3), hinge positions (n, 3) and W rows."""
    poses = [uav_pose(params, i, 0.0) for i in range(params.n_uavs)]
    R0 = np.array([R for R, _ in poses])
    p = np.array([p for _, p in poses])
    return R0, p, uav_wrench_matrix(params)


def build_allocation_maps(params: PlatformParams, gamma) -> AllocationMaps:
    """Stack the per-UAV wrench maps carried into the payload frame.

    Each UAV block is ``[[R, 0], [hat(p) R, R]] @ mask @ W``: the transposed
    adjoint of the inverse UAV pose applied to the masked UAV wrench. With
    ``R = R0 Rx(gamma)`` only the tilted Y and Z axes of the UAV survive the
    mask, so the blocks are assembled from those columns directly.
    """
    g = _check_gamma(params, gamma)
    n = params.n_uavs
    R0, p, W = _layout(params)
    c, s = np.cos(g)[:, None], np.sin(g)[:, None]
    y_ax = R0[:, :, 1] * c + R0[:, :, 2] * s
    z_ax = R0[:, :, 2] * c - R0[:, :, 1] * s
    # Thrust rows: f = z_ax * sum(u); torque rows add p x f and the rotor moments.
    f_blk = z_ax[:, :, None] * W[2][None, None, :]
    p_x_z = p[:, [1, 2, 0]] * z_ax[:, [2, 0, 1]] - p[:, [2, 0, 1]] * z_ax[:, [1, 2, 0]]
    t_blk = p_x_z[:, :, None] * W[2] + y_ax[:, :, None] * W[4] + z_ax[:, :, None] * W[5]
    M_f = f_blk.transpose(1, 0, 2).reshape(3, 4 * n)
    M_tau = t_blk.transpose(1, 0, 2).reshape(3, 4 * n)
    M_gamma = np.zeros((n, 4 * n))
    for i in range(n):
        M_gamma[i, 4 * i : 4 * i + 4] = W[3]
    return AllocationMaps(M_f=M_f, M_tau=M_tau, M_gamma=M_gamma)


def equilibrium_force(params: PlatformParams, R_wp: Array, disturbance_w=(0.0, 0.0, 0.0)) -> Array:
    """Payload-frame force that holds the payload still against gravity and a disturbance."""
    e3 = np.array([0.0, 0.0, 1.0])
    return np.asarray(R_wp).T @ (params.weight * e3 - np.asarray(disturbance_w, dtype=float))


__all__ = [
    "AllocationMaps",
    "PlatformParams",
    "build_allocation_maps",
    "equilibrium_force",
    "joint_torque_row",
    "uav_pose",
    "uav_wrench_matrix",
]
