"""Continuous-time models of the floating object, USV, and UAV.

Includes the tether-force algebra, the coupled linear model assembled in the
vessel-parallel frame, and its 4th-order discretization. All quantities SI.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import frames

G_MAG = 9.81
RHO_WATER = 1000.0

# Frozen state layout of the coupled model (vessel-parallel frame):
#   p_o (3), v_o (3), eta_b (3), nu_b (3), eta_u (6, interleaved pos/vel)
N_X = 18
N_U = 5
SL_P_O = slice(0, 3)
SL_V_O = slice(3, 6)
SL_ETA_B = slice(6, 9)
SL_NU_B = slice(9, 12)
SL_ETA_U = slice(12, 18)
UAV_POS_IDX = (12, 14, 16)   # x_u, y_u, z_u inside eta_u block
UAV_VEL_IDX = (13, 15, 17)


class SingularMass(Exception):
    """Combined inertia matrix is not invertible."""


@dataclass
class ObjectParams:
    m_o: float
    M_I: np.ndarray      # 6x6 rigid-body inertia
    M_A: np.ndarray      # 6x6 hydrodynamic added mass
    D: np.ndarray        # 6x6 linear damping
    G: np.ndarray        # 6x6 linear restoring
    g_mag: float = G_MAG

    @property
    def M(self) -> np.ndarray:
        return self.M_I + self.M_A

    def validate(self) -> None:
        M = self.M
        if not np.allclose(M, M.T, atol=1e-9):
            raise ValueError("object inertia matrix not symmetric")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise SingularMass("object M = M_I + M_A not positive definite") from exc
        if np.any(np.linalg.eigvalsh((self.D + self.D.T) / 2) < -1e-9):
            raise ValueError("object damping matrix not PSD")


@dataclass
class ObjectState:
    eta: np.ndarray   # (x, y, z, phi, theta, psi) world frame
    nu: np.ndarray    # (u, v, w, p, q, r) body frame

    @classmethod
    def zero(cls) -> "ObjectState":
        return cls(np.zeros(6), np.zeros(6))


@dataclass
class UsvParams:
    M_I: np.ndarray      # 3x3 inertia
    M_A: np.ndarray      # 3x3 added mass
    D: np.ndarray        # 3x3 damping
    d_tau: float         # motor separation [m]
    tau_max: float       # per-motor thrust bound [N]

    @property
    def M(self) -> np.ndarray:
        return self.M_I + self.M_A

    @property
    def B_b(self) -> np.ndarray:
        """Thrust geometry: (port, starboard) -> (surge force, 0, yaw moment)."""
        return np.array([
            [1.0, 1.0],
            [0.0, 0.0],
            [self.d_tau / 2.0, -self.d_tau / 2.0],
        ])

    def validate(self) -> None:
        if self.d_tau <= 0 or self.tau_max <= 0:
            raise ValueError("d_tau and tau_max must be positive")
        if abs(np.linalg.det(self.M)) < 1e-12:
            raise SingularMass("USV M_I + M_A is singular")


@dataclass
class UsvState:
    eta: np.ndarray   # (x_b, y_b, psi_b) world frame
    nu: np.ndarray    # (u_b, v_b, r_b) body frame

    @classmethod
    def zero(cls) -> "UsvState":
        return cls(np.zeros(3), np.zeros(3))


@dataclass
class UavParams:
    a1: float = 1.0
    b1: float = 1.0
    u_max: float = 5.0   # per-axis input bound [m/s^2]
    v_max: float = 5.0   # per-axis velocity bound [m/s]

    def validate(self) -> None:
        if self.a1 <= 0 or self.b1 <= 0:
            raise ValueError("a1 and b1 must be positive")

    @property
    def A_u(self) -> np.ndarray:
        A1 = np.array([[0.0, self.a1], [0.0, 0.0]])
        A = np.zeros((6, 6))
        for i in range(3):
            A[2 * i:2 * i + 2, 2 * i:2 * i + 2] = A1
        return A

    @property
    def B_u(self) -> np.ndarray:
        B = np.zeros((6, 3))
        for i in range(3):
            B[2 * i + 1, i] = self.b1
        return B


@dataclass
class UavState:
    eta: np.ndarray   # (x_u, u_u, y_u, v_u, z_u, w_u) world frame, interleaved

    @classmethod
    def zero(cls) -> "UavState":
        return cls(np.zeros(6))

    @property
    def pos(self) -> np.ndarray:
        return self.eta[0::2]

    @property
    def vel(self) -> np.ndarray:
        return self.eta[1::2]


@dataclass
class TetherSpec:
    l_usv: float = 4.0
    l_uav: float = 5.0
    epsilon: float = 0.3

    def validate(self) -> None:
        if self.l_usv <= 0 or self.l_uav <= 0:
            raise ValueError("tether lengths must be positive")
        if not 0 < self.epsilon < self.l_uav:
            raise ValueError("epsilon must lie in (0, l_uav)")


@dataclass
class CoupledLinearModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        assert self.A.shape == (N_X, N_X)
        assert self.B.shape == (N_X, N_U)


@dataclass
class DiscreteModel:
    A_d: np.ndarray
    B_d: np.ndarray
    dt: float


def default_object_params(radius: float = 0.25, mass: float = 5.0,
                          damping: np.ndarray | None = None) -> ObjectParams:
    """Spherical floating object with closed-form added mass and heave restoring."""
    inertia = 0.4 * mass * radius ** 2
    M_I = np.diag([mass, mass, mass, inertia, inertia, inertia])
    added = 0.5 * RHO_WATER * (4.0 / 3.0) * math.pi * radius ** 3
    M_A = np.diag([added, added, added, 0.0, 0.0, 0.0])
    if damping is None:
        damping = np.array([15.0, 15.0, 30.0, 5.0, 5.0, 5.0])
    D = np.diag(np.asarray(damping, dtype=float))
    heave = RHO_WATER * G_MAG * math.pi * radius ** 2
    G = np.diag([0.0, 0.0, heave, 20.0, 20.0, 0.0])
    return ObjectParams(m_o=mass, M_I=M_I, M_A=M_A, D=D, G=G)


def default_usv_params() -> UsvParams:
    """Order-of-magnitude WAM-V: twin stern thrusters, 20% added mass."""
    M_I = np.diag([180.0, 180.0, 120.0])
    return UsvParams(
        M_I=M_I,
        M_A=0.2 * M_I,
        D=np.diag([60.0, 120.0, 100.0]),
        d_tau=2.4,
        tau_max=250.0,
    )


def default_uav_params() -> UavParams:
    return UavParams()


def object_derivative(state: ObjectState, tau_o: np.ndarray,
                      params: ObjectParams) -> tuple[np.ndarray, np.ndarray]:
    """Linear-hydrodynamics object model; Coriolis terms dropped (low speed)."""
    phi, theta, psi = state.eta[3:6]
    J = frames.euler_to_transform(phi, theta, psi)
    eta_dot = J @ state.nu
    nu_dot = np.linalg.solve(
        params.M, tau_o - params.D @ state.nu - params.G @ state.eta)
    return eta_dot, nu_dot


def tether_wrench(uav_accel: np.ndarray, usv_accel: np.ndarray,
                  params: ObjectParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tether forces on the object from robot accelerations (rigid coupling)."""
    usv_accel = np.asarray(usv_accel, dtype=float)
    if abs(usv_accel[2]) > 1e-12:
        raise ValueError("USV acceleration must be planar")
    F_u = params.M @ np.concatenate([np.asarray(uav_accel, dtype=float), np.zeros(3)])
    F_b = params.M @ np.concatenate([usv_accel, np.zeros(3)])
    return F_u, F_b, F_u + F_b


def check_no_lifting(tau_o: np.ndarray, eta_o: np.ndarray,
                     params: ObjectParams) -> bool:
    """True iff the vertical world-frame wrench component stays below the weight."""
    phi, theta, psi = np.asarray(eta_o, dtype=float)[3:6]
    J = frames.euler_to_transform(phi, theta, psi)
    vertical = (J @ np.asarray(tau_o, dtype=float))[2]
    return vertical < params.m_o * params.g_mag


TAUT_THRESHOLD = 1e-6  # [N]; strict ||F|| > 0 is untestable in floating point


def check_taut(force: np.ndarray, threshold: float = TAUT_THRESHOLD) -> bool:
    return float(np.linalg.norm(np.asarray(force, dtype=float)[:3])) > threshold


def usv_derivative(state: UsvState, u_b: np.ndarray,
                   params: UsvParams) -> tuple[np.ndarray, np.ndarray]:
    eta_dot = frames.rot_z(state.eta[2]) @ state.nu
    nu_dot = np.linalg.solve(params.M, params.B_b @ np.asarray(u_b, dtype=float)
                             - params.D @ state.nu)
    return eta_dot, nu_dot


def uav_derivative(state: UavState, u_u: np.ndarray, params: UavParams) -> np.ndarray:
    return params.A_u @ state.eta + params.B_u @ np.asarray(u_u, dtype=float)


def assemble_coupled_model(obj: ObjectParams, usv: UsvParams, uav: UavParams,
                           single_robot: bool = False) -> CoupledLinearModel:
    """Stacked linear model in the vessel-parallel frame.

    Object rows keep only the translational axes; robot accelerations are
    substituted directly into the object-acceleration rows. With
    single_robot=True the UAV block is frozen and its input columns dropped.
    """
    obj.validate()
    usv.validate()
    uav.validate()

    A = np.zeros((N_X, N_X))
    B = np.zeros((N_X, N_U))

    M3 = obj.M[:3, :3]
    D3 = obj.D[:3, :3]
    G3 = obj.G[:3, :3]
    try:
        Minv3 = np.linalg.inv(M3)
    except np.linalg.LinAlgError as exc:
        raise SingularMass("object translational inertia singular") from exc
    Mb_inv = np.linalg.inv(usv.M)

    # object kinematics and hydrodynamics
    A[SL_P_O, SL_V_O] = np.eye(3)
    A[SL_V_O, SL_P_O] = -Minv3 @ G3
    A[SL_V_O, SL_V_O] = -Minv3 @ D3

    # USV rows (vessel-parallel: eta_b_dot ~= nu_b)
    A[SL_ETA_B, SL_NU_B] = np.eye(3)
    usv_acc_A = -Mb_inv @ usv.D
    usv_acc_B = Mb_inv @ usv.B_b
    A[SL_NU_B, SL_NU_B] = usv_acc_A
    B[SL_NU_B, 0:2] = usv_acc_B

    # USV planar acceleration coupled into the object (surge, sway rows)
    A[3, SL_NU_B] = usv_acc_A[0, :]
    A[4, SL_NU_B] = usv_acc_A[1, :]
    B[3, 0:2] = usv_acc_B[0, :]
    B[4, 0:2] = usv_acc_B[1, :]

    if not single_robot:
        # UAV rows and its acceleration coupled into the object
        A[SL_ETA_U, SL_ETA_U] = uav.A_u
        B[SL_ETA_U, 2:5] = uav.B_u
        gain = uav.a1 * uav.b1
        B[3, 2] = gain
        B[4, 3] = gain
        B[5, 4] = gain

    return CoupledLinearModel(A=A, B=B)


def discretize(model: CoupledLinearModel, dt: float) -> DiscreteModel:
    """4th-order truncated matrix-exponential discretization (RK4-equivalent)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, B = model.A, model.B
    n = A.shape[0]
    I = np.eye(n)
    A2 = A @ A
    A3 = A2 @ A
    A4 = A3 @ A
    A_d = I + dt * A + dt ** 2 / 2 * A2 + dt ** 3 / 6 * A3 + dt ** 4 / 24 * A4
    B_d = (dt * I + dt ** 2 / 2 * A + dt ** 3 / 6 * A2 + dt ** 4 / 24 * A3) @ B
    return DiscreteModel(A_d=A_d, B_d=B_d, dt=dt)
