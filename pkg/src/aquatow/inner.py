"""Inner-loop reference controllers running at 100 Hz.

Convert MPC trajectory references into actuator commands: differential thrust
allocation for the USV and acceleration commands for the UAV.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import frames
from .models import UsvParams, UsvState, UavState


@dataclass
class UsvCommand:
    tau_port: float
    tau_starboard: float

    def as_array(self) -> np.ndarray:
        return np.array([self.tau_port, self.tau_starboard])


@dataclass
class UavCommand:
    accel: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.asarray(self.accel, dtype=float)


@dataclass
class Gains:
    kp_surge: float = 60.0      # N/m
    kd_surge: float = 250.0     # N*s/m
    ki_surge: float = 80.0      # N/m (integral of speed error)
    k_along: float = 0.8        # 1/s (object along-track error to speed)
    kd_along: float = 1.6       # object along-track velocity damping
    k_sep: float = 0.8          # 1/s (slack take-up on the tow tether)
    kp_yaw: float = 200.0       # N*m/rad
    kd_yaw: float = 150.0       # N*m*s/rad
    uav_kp: float = 25.0
    uav_kd: float = 10.0


def thrust_allocation(tau_surge: float, tau_yaw: float, d_tau: float) -> UsvCommand:
    """Invert the thrust-geometry map onto (port, starboard) motor thrusts."""
    if d_tau <= 0:
        raise ValueError("d_tau must be positive")
    return UsvCommand(tau_port=tau_surge / 2.0 + tau_yaw / d_tau,
                      tau_starboard=tau_surge / 2.0 - tau_yaw / d_tau)


def usv_reference_controller(state: UsvState, ref_eta: np.ndarray,
                             ref_nu: np.ndarray, gains: Gains,
                             params: UsvParams,
                             ff_thrust: np.ndarray | None = None) -> UsvCommand:
    """PD in surge and yaw on body-frame errors, then thrust allocation.

    Sway is uncontrolled (underactuated twin-thruster vessel). An optional
    (port, starboard) feed-forward from the planner is added before the
    saturation, which preserves the surge/yaw effort ratio.
    """
    psi = state.eta[2]
    e_world = np.asarray(ref_eta, dtype=float)[:2] - state.eta[:2]
    e_body = frames.rot_z(psi).T[:2, :2] @ e_world
    e_psi = frames.wrap_angle(float(ref_eta[2]) - psi)

    tau_surge = gains.kp_surge * e_body[0] + gains.kd_surge * (ref_nu[0] - state.nu[0])
    tau_yaw = gains.kp_yaw * e_psi + gains.kd_yaw * (ref_nu[2] - state.nu[2])

    cmd = thrust_allocation(tau_surge, tau_yaw, params.d_tau)
    if ff_thrust is not None:
        cmd = UsvCommand(cmd.tau_port + float(ff_thrust[0]),
                         cmd.tau_starboard + float(ff_thrust[1]))
    peak = max(abs(cmd.tau_port), abs(cmd.tau_starboard))
    if peak > params.tau_max:
        scale = params.tau_max / peak
        cmd = UsvCommand(cmd.tau_port * scale, cmd.tau_starboard * scale)
    return cmd


def uav_reference_controller(state: UavState, ref_p: np.ndarray,
                             ref_v: np.ndarray, gains: Gains,
                             u_max: float,
                             ff_accel: np.ndarray | None = None) -> UavCommand:
    """PD on position/velocity error plus feed-forward, saturated per axis."""
    accel = (gains.uav_kp * (np.asarray(ref_p, dtype=float) - state.pos)
             + gains.uav_kd * (np.asarray(ref_v, dtype=float) - state.vel))
    if ff_accel is not None:
        accel = accel + np.asarray(ff_accel, dtype=float)
    return UavCommand(accel=np.clip(accel, -u_max, u_max))
