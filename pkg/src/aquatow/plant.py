"""Nonlinear truth simulator for the tethered object/USV/UAV system.

Integrates the full per-body equations with RK4 at a fixed fine timestep.
Tethers are realized as stiff unilateral spring-dampers, which keeps the
nominal operation in the taut regime the controller assumes while remaining
robust to transients.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import frames, models
from .mission import Disturbance
from .models import ObjectParams, ObjectState, UavParams, UavState, UsvParams, UsvState


class NumericBlowup(Exception):
    """A state magnitude exceeded the sanity bound during integration."""


@dataclass
class TetherModel:
    stiffness: float = 2e4    # N/m
    damping: float = 200.0    # N*s/m
    rest_length: float = 5.0  # m

    def validate(self) -> None:
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")


def tether_force(p_a: np.ndarray, v_a: np.ndarray, p_b: np.ndarray,
                 v_b: np.ndarray, model: TetherModel) -> np.ndarray:
    """Force on body a from a unilateral spring-damper tether a--b.

    Zero while slack; when stretched, pulls a toward b along the line of the
    tether. Never pushes.
    """
    d = np.asarray(p_b, dtype=float) - np.asarray(p_a, dtype=float)
    dist = float(np.linalg.norm(d))
    if dist <= model.rest_length or dist == 0.0:
        return np.zeros(3)
    unit = d / dist
    radial_speed = float(unit @ (np.asarray(v_b, dtype=float)
                                 - np.asarray(v_a, dtype=float)))
    magnitude = model.stiffness * (dist - model.rest_length) \
        + model.damping * radial_speed
    if magnitude <= 0.0:
        return np.zeros(3)
    return magnitude * unit


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    """Classical 4th-order Runge-Kutta step for x' = f(x)."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class PlantState:
    object: ObjectState
    usv: UsvState
    uav: UavState | None
    t: float = 0.0


@dataclass
class PlantDiagnostics:
    usv_tension: np.ndarray
    uav_tension: np.ndarray
    usv_length: float
    uav_length: float
    tau_o: np.ndarray          # body-frame tether wrench on the object
    usv_taut: bool
    uav_taut: bool
    no_lifting_ok: bool


STATE_DIM = 24
BLOWUP_LIMIT = 1e6


class Plant:
    """Truth simulator; one instance is advanced by exactly one caller."""

    def __init__(self, obj: ObjectParams, usv: UsvParams, uav: UavParams,
                 usv_tether: TetherModel, uav_tether: TetherModel | None,
                 uav_mass: float = 3.5,
                 usv_attach: np.ndarray | None = None):
        obj.validate()
        usv.validate()
        self.obj_params = obj
        self.usv_params = usv
        self.uav_params = uav
        self.usv_tether = usv_tether
        self.uav_tether = uav_tether
        self.uav_mass = uav_mass
        self.usv_attach = (np.array([-1.0, 0.0, 0.0]) if usv_attach is None
                           else np.asarray(usv_attach, dtype=float))
        self._Mo = obj.M
        self._Mo_inv = np.linalg.inv(self._Mo)
        self._Mb_inv = np.linalg.inv(usv.M)
        self._A_u = uav.A_u
        self._B_u = uav.B_u

    # -- state packing -----------------------------------------------------

    @staticmethod
    def pack(state: PlantState) -> np.ndarray:
        x = np.zeros(STATE_DIM)
        x[0:6] = state.object.eta
        x[6:12] = state.object.nu
        x[12:15] = state.usv.eta
        x[15:18] = state.usv.nu
        if state.uav is not None:
            x[18:24] = state.uav.eta
        return x

    @staticmethod
    def unpack(x: np.ndarray, t: float, has_uav: bool) -> PlantState:
        return PlantState(
            object=ObjectState(eta=x[0:6].copy(), nu=x[6:12].copy()),
            usv=UsvState(eta=x[12:15].copy(), nu=x[15:18].copy()),
            uav=UavState(eta=x[18:24].copy()) if has_uav else None,
            t=t)

    # -- geometry helpers --------------------------------------------------

    def _usv_attach_world(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        psi = x[14]
        R = frames.rot_z(psi)
        p = x[12:15].copy()
        p[2] = 0.0
        p_att = p + R @ self.usv_attach
        u, v, r = x[15:18]
        ox, oy = self.usv_attach[0], self.usv_attach[1]
        v_body = np.array([u - r * oy, v + r * ox, 0.0])
        return p_att, R @ v_body

    def _object_world_vel(self, x: np.ndarray) -> np.ndarray:
        phi, th, psi = x[3:6]
        return frames.euler_rotation(phi, th, psi) @ x[6:9]

    def tether_forces(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World-frame tether forces on the object (from USV, from UAV)."""
        p_o = x[0:3]
        v_o = self._object_world_vel(x)
        p_att, v_att = self._usv_attach_world(x)
        f_usv = tether_force(p_o, v_o, p_att, v_att, self.usv_tether)
        if self.uav_tether is not None:
            p_u = x[18:24][0::2]
            v_u = x[18:24][1::2]
            f_uav = tether_force(p_o, v_o, p_u, v_u, self.uav_tether)
        else:
            f_uav = np.zeros(3)
        return f_usv, f_uav

    # -- dynamics ----------------------------------------------------------

    def _derivative(self, x: np.ndarray, u_b: np.ndarray, u_u: np.ndarray,
                    ext_force: np.ndarray) -> np.ndarray:
        obj, usv = self.obj_params, self.usv_params
        dx = np.zeros(STATE_DIM)

        f_usv, f_uav = self.tether_forces(x)
        phi, th, psi_o = x[3:6]
        R_o = frames.euler_rotation(phi, th, psi_o)
        J_rate = frames.euler_rate_transform(phi, th)

        # object: body wrench from tethers and disturbance, force at the center
        f_world = f_usv + f_uav + ext_force
        f_body = R_o.T @ f_world
        tau = np.concatenate([f_body, np.zeros(3)])
        nu = x[6:12]
        dx[0:3] = R_o @ nu[:3]
        dx[3:6] = J_rate @ nu[3:6]
        dx[6:12] = self._Mo_inv @ (tau - obj.D @ nu - obj.G @ x[0:6])

        # USV: thrust plus tether reaction mapped through the body frame
        psi_b = x[14]
        R_b = frames.rot_z(psi_b)
        reaction = R_b.T @ (-f_usv)
        ox, oy = self.usv_attach[0], self.usv_attach[1]
        moment = ox * reaction[1] - oy * reaction[0]
        tau_b = usv.B_b @ u_b + np.array([reaction[0], reaction[1], moment])
        nu_b = x[15:18]
        dx[12:15] = R_b @ nu_b
        dx[15:18] = self._Mb_inv @ (tau_b - usv.D @ nu_b)

        # UAV: double integrator plus tether reaction
        if self.uav_tether is not None:
            eta_u = x[18:24]
            dx[18:24] = self._A_u @ eta_u + self._B_u @ u_u
            dx[19:24:2] += (-f_uav) / self.uav_mass
        return dx

    def step(self, state: PlantState, u_b: np.ndarray, u_u: np.ndarray,
             disturbances: list[Disturbance], dt: float) -> PlantState:
        """Advance one RK4 step with zero-order-held inputs."""
        ext = np.zeros(3)
        for d in disturbances:
            if d.active(state.t):
                ext = ext + d.force
        x = self.pack(state)
        u_b = np.asarray(u_b, dtype=float)
        u_u = np.asarray(u_u, dtype=float)
        x_next = rk4_step(lambda s: self._derivative(s, u_b, u_u, ext), x, dt)
        if not np.all(np.isfinite(x_next)) or np.max(np.abs(x_next)) > BLOWUP_LIMIT:
            raise NumericBlowup(f"state diverged at t={state.t:.3f}")
        # keep angles wrapped
        for i in (3, 4, 5, 14):
            x_next[i] = frames.wrap_angle(x_next[i])
        return self.unpack(x_next, state.t + dt, self.uav_tether is not None)

    # -- monitoring --------------------------------------------------------

    def diagnostics(self, state: PlantState) -> PlantDiagnostics:
        x = self.pack(state)
        f_usv, f_uav = self.tether_forces(x)
        p_att, _ = self._usv_attach_world(x)
        usv_len = float(np.linalg.norm(p_att - x[0:3]))
        if state.uav is not None:
            uav_len = float(np.linalg.norm(state.uav.pos - x[0:3]))
        else:
            uav_len = 0.0
        phi, th, psi_o = x[3:6]
        R_o = frames.euler_rotation(phi, th, psi_o)
        tau_o = np.concatenate([R_o.T @ (f_usv + f_uav), np.zeros(3)])
        return PlantDiagnostics(
            usv_tension=f_usv, uav_tension=f_uav,
            usv_length=usv_len, uav_length=uav_len,
            tau_o=tau_o,
            usv_taut=models.check_taut(np.concatenate([f_usv, np.zeros(3)])),
            uav_taut=models.check_taut(np.concatenate([f_uav, np.zeros(3)])),
            no_lifting_ok=models.check_no_lifting(tau_o, x[0:6], self.obj_params))

    def mechanical_energy(self, state: PlantState) -> float:
        """Kinetic plus stored potential energy; used by conservation audits."""
        x = self.pack(state)
        nu = x[6:12]
        e = 0.5 * nu @ self._Mo @ nu
        e += 0.5 * x[0:6] @ self.obj_params.G @ x[0:6]
        nu_b = x[15:18]
        e += 0.5 * nu_b @ self.usv_params.M @ nu_b
        if state.uav is not None:
            v_u = state.uav.vel
            e += 0.5 * self.uav_mass * v_u @ v_u
        p_att, _ = self._usv_attach_world(x)
        stretch = max(0.0, np.linalg.norm(p_att - x[0:3]) - self.usv_tether.rest_length)
        e += 0.5 * self.usv_tether.stiffness * stretch ** 2
        if state.uav is not None and self.uav_tether is not None:
            stretch = max(0.0, np.linalg.norm(state.uav.pos - x[0:3])
                          - self.uav_tether.rest_length)
            e += 0.5 * self.uav_tether.stiffness * stretch ** 2
        return float(e)
