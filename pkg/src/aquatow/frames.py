"""Coordinate frames and transforms.

World frame W is an ENU-style inertial frame. Each body carries its own
body-fixed frame. The vessel-parallel frame P is the world frame rotated by
the USV yaw, in which the coupled towing model becomes linear.
"""

import math

import numpy as np

GIMBAL_LOCK_MARGIN = 1e-6


class GimbalLock(Exception):
    """Pitch too close to +-pi/2 for the Euler-rate transform."""


def wrap_angle(psi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(psi, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rot_z(psi: float) -> np.ndarray:
    """Planar yaw rotation embedded in a 3x3 matrix (body -> world)."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([
        [c, -s, 0.0],
        [s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])


def euler_rate_transform(phi: float, theta: float) -> np.ndarray:
    """Body angular rates -> intrinsic ZYX Euler-angle rates."""
    if abs(abs(theta) - math.pi / 2.0) < GIMBAL_LOCK_MARGIN or abs(theta) > math.pi / 2.0:
        raise GimbalLock(f"pitch {theta} rad is at or beyond +-pi/2")
    sphi, cphi = math.sin(phi), math.cos(phi)
    stheta, ctheta = math.sin(theta), math.cos(theta)
    ttheta = stheta / ctheta
    return np.array([
        [1.0, sphi * ttheta, cphi * ttheta],
        [0.0, cphi, -sphi],
        [0.0, sphi / ctheta, cphi / ctheta],
    ])


def euler_rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    """Intrinsic ZYX rotation matrix (body -> world): R_z(psi) R_y(theta) R_x(phi)."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array([
        [cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth],
        [spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi],
        [-sth, cth * sphi, cth * cphi],
    ])


def euler_to_transform(phi: float, theta: float, psi: float) -> np.ndarray:
    """6x6 block-diagonal velocity transform for a 6-DOF marine craft.

    Upper block maps body linear velocity to world, lower block maps body
    angular rates to Euler-angle rates. Raises GimbalLock near theta = +-pi/2.
    """
    J = np.zeros((6, 6))
    J[:3, :3] = euler_rotation(phi, theta, psi)
    J[3:, 3:] = euler_rate_transform(phi, theta)
    return J


def to_vessel_parallel(vec_world: np.ndarray, psi_b: float) -> np.ndarray:
    """Express a world-frame 3-vector in the vessel-parallel frame P."""
    return rot_z(psi_b).T @ np.asarray(vec_world, dtype=float)


def from_vessel_parallel(vec_p: np.ndarray, psi_b: float) -> np.ndarray:
    """Exact inverse of to_vessel_parallel (orthogonal, no solve)."""
    return rot_z(psi_b) @ np.asarray(vec_p, dtype=float)
