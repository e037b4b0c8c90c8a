"""Rigid-body helpers: axis rotations, the hat operator, wrench adjoints, rank."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]

RANK_TOL = 1e-9


def rot_axis(axis: str, angle: float) -> Array:
    """Rotation matrix about a principal axis (``"x"``, ``"y"`` or ``"z"``)."""
    if not np.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle!r}")
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unknown axis {axis!r}")


def rot_x(angle: float) -> Array:
    return rot_axis("x", angle)


def rot_y(angle: float) -> Array:
    return rot_axis("y", angle)


def rot_z(angle: float) -> Array:
    return rot_axis("z", angle)


def rpy_to_rot(roll: float, pitch: float, yaw: float) -> Array:
    """``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rot_to_rpy(R: Array) -> Array:
    """Inverse of :func:`rpy_to_rot` away from pitch = +-pi/2."""
    pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def hat(a) -> Array:
    """Skew-symmetric matrix with ``hat(a) @ b == cross(a, b)``."""
    a0, a1, a2 = (float(x) for x in a)
    return np.array([[0.0, -a2, a1], [a2, 0.0, -a0], [-a1, a0, 0.0]])


def adjoint_transpose(R: Array, p) -> Array:
    """Transposed adjoint ``[[R^T, 0], [-R^T hat(p), R^T]]`` of the pose ``(R, p)``.

    Multiplying a wrench ``[f; tau]`` expressed at the child frame of the pose
    ``(R^T, -R^T p)`` by this matrix re-expresses it at the parent frame.
    """
    Rt = np.asarray(R, dtype=float).T
    out = np.zeros((6, 6))
    out[:3, :3] = Rt
    out[3:, :3] = -Rt @ hat(p)
    out[3:, 3:] = Rt
    return out


def orthonormalize(R: Array) -> Array:
    """Nearest rotation matrix (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def rank(M: Array, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
