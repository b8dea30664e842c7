"""Small rotation / angle helpers shared across modules.

Orientation convention everywhere: ZYX Euler angles stored as (roll, pitch,
yaw), i.e. R = Rz(yaw) @ Ry(pitch) @ Rx(roll). Angular velocities are world
frame unless a function says otherwise.
"""

from __future__ import annotations

import math

import numpy as np


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_zyx(rpy) -> np.ndarray:
    """Body-to-world rotation from (roll, pitch, yaw)."""
    roll, pitch, yaw = float(rpy[0]), float(rpy[1]), float(rpy[2])
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]. Works on scalars and arrays."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)


def euler_rate_matrix_zyx(rpy) -> np.ndarray:
    """E such that omega_world = E @ [roll_dot, pitch_dot, yaw_dot].

    Columns are the world-frame axes each Euler rate rotates about:
    roll about Rz(yaw)Ry(pitch) x_hat, pitch about Rz(yaw) y_hat, yaw about z_hat.
    Singular at |pitch| = pi/2 (det = cos(pitch)).
    """
    _, pitch, yaw = float(rpy[0]), float(rpy[1]), float(rpy[2])
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, -sy, 0.0],
            [sy * cp, cy, 0.0],
            [-sp, 0.0, 1.0],
        ]
    )
