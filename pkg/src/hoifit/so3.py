"""Rotation utilities: axis-angle vectors, Z-Y-X Euler angles, geodesic distance.

The camera/world frame follows the usual computer-vision convention (x right,
y down in the image, z forward), so an object standing upright and facing the
camera carries a 180-degree rotation about x relative to the canonical frame
(+y up, +z front). ``UPRIGHT_FACING`` is that reference rotation; Euler angles
on disk and in the tilt regularizer are measured relative to it so that a
plausible scene reads as (0, 0, 0).
"""
from __future__ import annotations

import numpy as np

from .validation import check_rotation_matrix, check_vector

# Canonical +y maps to scene-up (-y world) and +z front maps toward the camera.
UPRIGHT_FACING = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


def rotvec_to_matrix(r) -> np.ndarray:
    """Rodrigues formula for an axis-angle 3-vector (angle = norm, radians)."""
    r = check_vector(r, 3, "rotation vector")
    angle = float(np.linalg.norm(r))
    if angle < 1e-12:
        k = np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])
        return np.eye(3) + k  # first-order term; higher orders below 1e-24
    axis = r / angle
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def matrix_to_rotvec(mat) -> np.ndarray:
    """Inverse of :func:`rotvec_to_matrix`; returns the minimal-angle vector."""
    mat = check_rotation_matrix(mat)
    cos_angle = np.clip((np.trace(mat) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle < 1e-9:
        return np.array(
            [mat[2, 1] - mat[1, 2], mat[0, 2] - mat[2, 0], mat[1, 0] - mat[0, 1]]
        ) / 2.0
    if abs(np.pi - angle) < 1e-6:
        # Near 180 degrees the off-diagonal difference loses precision; use
        # the symmetric part instead.
        b = (mat + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(b), 0.0, None))
        # Fix signs from the largest component.
        i = int(np.argmax(axis))
        if axis[i] > 0:
            axis = axis.copy()
            axis[(i + 1) % 3] = b[i, (i + 1) % 3] / axis[i]
            axis[(i + 2) % 3] = b[i, (i + 2) % 3] / axis[i]
        axis = axis / np.linalg.norm(axis)
        return axis * angle
    axis = np.array(
        [mat[2, 1] - mat[1, 2], mat[0, 2] - mat[2, 0], mat[1, 0] - mat[0, 1]]
    ) / (2.0 * np.sin(angle))
    return axis * angle


def _axis_rot(axis: int, angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    m = np.eye(3)
    a, b = (axis + 1) % 3, (axis + 2) % 3
    m[a, a] = c
    m[a, b] = -s
    m[b, a] = s
    m[b, b] = c
    return m


def euler_zyx_to_matrix(roll_deg: float, yaw_deg: float, pitch_deg: float) -> np.ndarray:
    """Compose R = Rz(roll) @ Ry(yaw) @ Rx(pitch), angles in degrees.

    Roll (about camera z) is applied last, so it reads as in-image tilt.
    """
    rz = _axis_rot(2, np.deg2rad(roll_deg))
    ry = _axis_rot(1, np.deg2rad(yaw_deg))
    rx = _axis_rot(0, np.deg2rad(pitch_deg))
    return rz @ ry @ rx


def matrix_to_euler_zyx(mat) -> tuple[float, float, float]:
    """Decompose into (roll_z, yaw_y, pitch_x) degrees; inverse of the above."""
    mat = check_rotation_matrix(mat)
    yaw = -np.arcsin(np.clip(mat[2, 0], -1.0, 1.0))
    if abs(abs(mat[2, 0]) - 1.0) < 1e-12:  # gimbal: pick roll = 0
        roll = 0.0
        pitch = np.arctan2(-mat[1, 2], mat[1, 1])
    else:
        pitch = np.arctan2(mat[2, 1], mat[2, 2])
        roll = np.arctan2(mat[1, 0], mat[0, 0])
    return float(np.rad2deg(roll)), float(np.rad2deg(yaw)), float(np.rad2deg(pitch))


def upright_euler_to_matrix(roll_deg: float, yaw_deg: float, pitch_deg: float) -> np.ndarray:
    """Orientation from Euler angles measured relative to ``UPRIGHT_FACING``."""
    return euler_zyx_to_matrix(roll_deg, yaw_deg, pitch_deg) @ UPRIGHT_FACING


def matrix_to_upright_euler(mat) -> tuple[float, float, float]:
    """Euler angles (roll, yaw, pitch) of the rotation relative to upright-facing."""
    rel = np.asarray(mat, dtype=np.float64) @ UPRIGHT_FACING.T
    return matrix_to_euler_zyx(rel)


def geodesic_angle_deg(r1, r2) -> float:
    """Relative angle between two rotations in SO(3), in degrees.

    Evaluates arccos((trace(R1 R2^T) - 1) / 2) through atan2 of the relative
    rotation's sine and cosine parts; arccos itself amplifies round-off near
    0 and 180 degrees by a square root, which would break exactness there.
    """
    r1 = check_rotation_matrix(r1, "first rotation")
    r2 = check_rotation_matrix(r2, "second rotation")
    rel = r1 @ r2.T
    cos_angle = (np.trace(rel) - 1.0) / 2.0
    sin_vec = np.array(
        [rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]]
    ) / 2.0
    return float(np.rad2deg(np.arctan2(np.linalg.norm(sin_vec), cos_angle)))
