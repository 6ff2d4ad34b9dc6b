"""Receding-horizon controller over the discretized coupled towing model.

Builds the stacked sparse QP (dynamics equalities, state/input boxes, and the
linearized two-circle tether band on the UAV's planar position relative to the
object), solves it by ADMM with warm starting, and emits reference
trajectories for both robots in the world frame.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sparse

from . import frames, models
from .models import (N_X, N_U, SL_P_O, SL_V_O, SL_ETA_B, SL_NU_B,
                     UAV_POS_IDX, UAV_VEL_IDX, TetherSpec)
from .qp import SparseQP, SolverSettings, AdmmSolver, Status

# penalty weights on the tether-band slack variables (quadratic, linear);
# the band is soft so the QP stays feasible when the towed object outruns
# the acceleration-capped UAV plan
TETHER_SLACK_WEIGHT = 200.0
TETHER_SLACK_LIN = 1.0


class DegenerateGeometry(Exception):
    """Tether linearization undefined (vertical tether or zero planar offset)."""


class SolverFailed(Exception):
    def __init__(self, status: Status):
        super().__init__(f"QP solver failed with status {status}")
        self.status = status


class DimensionMismatch(Exception):
    pass


@dataclass
class TetherHalfPlanes:
    normal: np.ndarray   # planar radial unit direction, object -> UAV
    b_min: float
    b_max: float


@dataclass
class MpcConfig:
    n: int = 30
    dt: float = 0.1
    Q: np.ndarray = None     # state weights, diagonal
    R: np.ndarray = None     # input weights, diagonal
    S: np.ndarray = None     # terminal state weights, diagonal
    x_min: np.ndarray = None
    x_max: np.ndarray = None
    u_min: np.ndarray = None
    u_max: np.ndarray = None
    # weight on the planar UAV-minus-object offset tracking its reference
    # offset; relative, so it exerts no net force when the pair moves together
    w_trail: float = 0.0

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("horizon must be at least 2 steps")
        if self.w_trail < 0:
            raise ValueError("w_trail must be nonnegative")
        for w in (self.Q, self.R, self.S):
            if np.any(np.asarray(w) < 0):
                raise ValueError("weights must be nonnegative")
        if np.any(self.x_min > self.x_max) or np.any(self.u_min > self.u_max):
            raise ValueError("inconsistent bounds")


def default_mpc_config(usv: models.UsvParams, uav: models.UavParams,
                       n: int = 30, dt: float = 0.1) -> MpcConfig:
    Q = np.zeros(N_X)
    Q[SL_P_O] = 10.0
    Q[SL_V_O] = 1.0
    Q[SL_ETA_B] = 0.0
    Q[SL_NU_B] = np.array([1.0, 0.1, 0.1])   # surge tracks the path speed
    # the UAV trails the object (see w_trail below) so both tethers stay
    # pretensioned against each other; its absolute planar position carries
    # no cost of its own
    for i in UAV_VEL_IDX:
        Q[i] = 0.1
    Q[16] = 50.0    # UAV altitude held tightly at the commanded constant
    # thrust is priced per newton, UAV inputs per m/s^2; keep the USV the
    # cheap towing actuator per unit of object acceleration
    R = np.array([5e-3, 5e-3, 10.0, 10.0, 10.0])
    # planning speed caps well below the hardware limits: an overspeeding
    # vehicle cannot brake fast enough to honour the tether band, so the
    # plan must never get fast in the first place
    x_min = np.full(N_X, -np.inf)
    x_max = np.full(N_X, np.inf)
    x_min[SL_V_O], x_max[SL_V_O] = -2.0, 2.0
    x_min[SL_NU_B], x_max[SL_NU_B] = [-2.0, -2.0, -1.0], [2.0, 2.0, 1.0]
    v_uav = min(uav.v_max, 3.0)
    for i in UAV_VEL_IDX:
        x_min[i], x_max[i] = -v_uav, v_uav
    u_lim = np.array([usv.tau_max, usv.tau_max,
                      uav.u_max, uav.u_max, uav.u_max])
    return MpcConfig(n=n, dt=dt, Q=Q, R=R, S=10.0 * Q,
                     x_min=x_min, x_max=x_max, u_min=-u_lim, u_max=u_lim,
                     w_trail=2.0)


def linearize_tether(uav_pos: np.ndarray, obj_pos: np.ndarray,
                     spec: TetherSpec) -> TetherHalfPlanes:
    """Half-plane pair bounding the UAV's planar radial offset from the object.

    The feasible annulus (radii r -+ epsilon, r = sqrt(l^2 - dz^2)) is
    linearized at the current radial ray object -> UAV.
    """
    uav_pos = np.asarray(uav_pos, dtype=float)
    obj_pos = np.asarray(obj_pos, dtype=float)
    dz = uav_pos[2] - obj_pos[2]
    r_sq = spec.l_uav ** 2 - dz ** 2
    if r_sq <= 0:
        raise DegenerateGeometry("tether shorter than vertical offset")
    planar = uav_pos[:2] - obj_pos[:2]
    dist = float(np.linalg.norm(planar))
    if dist <= 1e-6:
        raise DegenerateGeometry("UAV directly above object")
    r = math.sqrt(r_sq)
    return TetherHalfPlanes(normal=planar / dist,
                            b_min=r - spec.epsilon, b_max=r + spec.epsilon)


@dataclass
class QPLayout:
    """Index map for the stacked decision vector (x_[1..n], u_[1..n-1], s_[1..n]).

    The trailing s block (one band-slack scalar per step) is present only
    when the QP carries a tether band.
    """
    n: int
    nx: int
    nu: int
    n_slack: int = 0

    @property
    def n_var(self) -> int:
        return self.n * self.nx + (self.n - 1) * self.nu + self.n_slack

    def x_slice(self, k: int) -> slice:
        # k in 1..n
        return slice((k - 1) * self.nx, k * self.nx)

    def u_slice(self, k: int) -> slice:
        # k in 1..n-1
        off = self.n * self.nx
        return slice(off + (k - 1) * self.nu, off + k * self.nu)

    def s_index(self, k: int) -> int:
        # k in 1..n_slack
        return self.n * self.nx + (self.n - 1) * self.nu + (k - 1)


def build_qp(model: models.DiscreteModel, x0: np.ndarray, ref: np.ndarray,
             cfg: MpcConfig, tether: TetherHalfPlanes | None,
             uav_xy_idx: tuple[int, int] = (UAV_POS_IDX[0], UAV_POS_IDX[1]),
             obj_xy_idx: tuple[int, int] = (0, 1)) -> tuple[SparseQP, QPLayout]:
    """Stacked sparse QP over the horizon.

    Constraint row order: dynamics equalities (n*nx), state boxes (n*nx),
    input boxes ((n-1)*nu), then with a tether: softened half-planes (2n)
    and slack nonnegativity (n). The final state transition holds the last
    input u_[n-1].
    """
    A_d, B_d = model.A_d, model.B_d
    nx, nu = A_d.shape[0], B_d.shape[1]
    n = cfg.n
    x0 = np.asarray(x0, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x0.shape != (nx,) or ref.shape != (n, nx):
        raise DimensionMismatch(
            f"expected x0 ({nx},) and ref ({n},{nx}), got {x0.shape}, {ref.shape}")
    lay = QPLayout(n=n, nx=nx, nu=nu, n_slack=(n if tether is not None else 0))

    # cost: sum_{k<n} e'Qe + u'Ru, terminal e'Se  ->  0.5 z'Pz + q'z
    Pdiag = np.concatenate([
        np.tile(2.0 * cfg.Q, n - 1), 2.0 * cfg.S,
        np.tile(2.0 * cfg.R, n - 1),
        np.full(lay.n_slack, 2.0 * TETHER_SLACK_WEIGHT)])
    q = np.zeros(lay.n_var)
    if lay.n_slack:
        q[lay.s_index(1):] = TETHER_SLACK_LIN
    for k in range(1, n):
        q[lay.x_slice(k)] = -2.0 * cfg.Q * ref[k - 1]
    q[lay.x_slice(n)] = -2.0 * cfg.S * ref[n - 1]

    # relative trailing cost w*||(p_uav - p_obj) - d_k||^2 on the planar
    # axes; anchoring the offset to the object (not the path) keeps it from
    # dragging the object when the object itself is off its reference
    P_extra_rows, P_extra_cols, P_extra_vals = [], [], []
    if cfg.w_trail > 0.0:
        two_w = 2.0 * cfg.w_trail
        for k in range(1, n + 1):
            xs = lay.x_slice(k).start
            for a in range(2):
                iu = xs + uav_xy_idx[a]
                io = xs + obj_xy_idx[a]
                d = ref[k - 1, uav_xy_idx[a]] - ref[k - 1, obj_xy_idx[a]]
                P_extra_rows.extend([iu, io, iu, io])
                P_extra_cols.extend([iu, io, io, iu])
                P_extra_vals.extend([two_w, two_w, -two_w, -two_w])
                q[iu] += -two_w * d
                q[io] += two_w * d

    rows, cols, vals = [], [], []
    l_parts, u_parts = [], []
    row0 = 0

    def add_block(r0, mat, c0):
        nz = np.nonzero(mat)
        rows.extend(r0 + nz[0])
        cols.extend(c0 + nz[1])
        vals.extend(mat[nz])

    # dynamics: x_1 - B u_1 = A x0 ; x_k - A x_{k-1} - B u_{min(k,n-1)} = 0
    for k in range(1, n + 1):
        xs = lay.x_slice(k)
        add_block(row0, np.eye(nx), xs.start)
        if k > 1:
            add_block(row0, -A_d, lay.x_slice(k - 1).start)
        add_block(row0, -B_d, lay.u_slice(min(k, n - 1)).start)
        rhs = A_d @ x0 if k == 1 else np.zeros(nx)
        l_parts.append(rhs)
        u_parts.append(rhs)
        row0 += nx

    # state boxes
    for k in range(1, n + 1):
        add_block(row0, np.eye(nx), lay.x_slice(k).start)
        l_parts.append(cfg.x_min)
        u_parts.append(cfg.x_max)
        row0 += nx

    # input boxes
    for k in range(1, n):
        add_block(row0, np.eye(nu), lay.u_slice(k).start)
        l_parts.append(cfg.u_min)
        u_parts.append(cfg.u_max)
        row0 += nu

    # tether band on the UAV planar position relative to the object,
    # softened by a per-step slack s_k >= 0: the towed object can outrun
    # the acceleration-capped UAV plan, so a hard band goes infeasible
    if tether is not None:
        ux, uy = tether.normal
        for k in range(1, n + 1):
            xs = lay.x_slice(k).start
            si = lay.s_index(k)
            for s_sign, lo, hi in ((1.0, tether.b_min, np.inf),
                                   (-1.0, -np.inf, tether.b_max)):
                rows.extend([row0] * 5)
                cols.extend([xs + uav_xy_idx[0], xs + uav_xy_idx[1],
                             xs + obj_xy_idx[0], xs + obj_xy_idx[1], si])
                vals.extend([ux, uy, -ux, -uy, s_sign])
                l_parts.append(np.array([lo]))
                u_parts.append(np.array([hi]))
                row0 += 1
        for k in range(1, n + 1):
            rows.append(row0)
            cols.append(lay.s_index(k))
            vals.append(1.0)
            l_parts.append(np.array([0.0]))
            u_parts.append(np.array([np.inf]))
            row0 += 1

    A_c = sparse.csc_matrix(
        (vals, (rows, cols)), shape=(row0, lay.n_var))
    P = sparse.diags(Pdiag).tocsc()
    if P_extra_vals:
        P = (P + sparse.csc_matrix(
            (P_extra_vals, (P_extra_rows, P_extra_cols)),
            shape=(lay.n_var, lay.n_var))).tocsc()
    qp = SparseQP(P=P, q=q, A_c=A_c,
                  l=np.concatenate(l_parts), u=np.concatenate(u_parts))
    return qp, lay


@dataclass
class MpcOutput:
    usv_traj: np.ndarray    # (n, 6): eta_b, nu_b in world frame
    uav_traj: np.ndarray    # (n, 6): p_u, v_u in world frame
    obj_traj: np.ndarray    # (n, 6): p_o, v_o in world frame
    first_inputs: np.ndarray
    qp_status: Status
    solve_time: float
    iterations: int
    violation_max: float


def extract_trajectories(x_stacked: np.ndarray, lay: QPLayout) -> np.ndarray:
    """De-interleave the stacked decision vector into (n, nx) state rows."""
    return x_stacked[:lay.n * lay.nx].reshape(lay.n, lay.nx)


class MpcController:
    """One instance per simulation; holds warm-start state and cached model."""

    def __init__(self, obj: models.ObjectParams, usv: models.UsvParams,
                 uav: models.UavParams, tether: TetherSpec,
                 cfg: MpcConfig | None = None,
                 settings: SolverSettings | None = None,
                 single_robot: bool = False,
                 uav_altitude: float = 3.0):
        self.obj_params = obj
        self.usv_params = usv
        self.uav_params = uav
        self.tether_spec = tether
        self.single_robot = single_robot
        self.uav_altitude = uav_altitude
        self.cfg = cfg or default_mpc_config(usv, uav)
        if single_robot:
            # UAV states frozen, inputs clamped to zero, tether rows dropped
            self.cfg.Q = self.cfg.Q.copy()
            self.cfg.S = self.cfg.S.copy()
            self.cfg.u_min = self.cfg.u_min.copy()
            self.cfg.u_max = self.cfg.u_max.copy()
            self.cfg.Q[models.SL_ETA_U] = 0.0
            self.cfg.S[models.SL_ETA_U] = 0.0
            self.cfg.u_min[2:] = 0.0
            self.cfg.u_max[2:] = 0.0
        self.cfg.validate()
        self.settings = settings or SolverSettings()
        cont = models.assemble_coupled_model(obj, usv, uav,
                                             single_robot=single_robot)
        self.model = models.discretize(cont, self.cfg.dt)
        self._warm = None
        self._last_tether = None
        self._ref_side = 1.0    # +1 = UAV abeam left of travel, -1 = right

    def control_step(self, obj_state: models.ObjectState,
                     usv_state: models.UsvState,
                     uav_state: models.UavState | None,
                     ref_window: list) -> MpcOutput:
        """Solve one receding-horizon step. References are world-frame RefSamples."""
        t0 = time.perf_counter()
        psi_b = usv_state.eta[2]
        Rw = frames.rot_z(psi_b)
        Rt = Rw.T

        x0 = np.zeros(N_X)
        x0[SL_P_O] = Rt @ obj_state.eta[:3]
        phi, th, psi_o = obj_state.eta[3:6]
        v_world = frames.euler_rotation(phi, th, psi_o) @ obj_state.nu[:3]
        x0[SL_V_O] = Rt @ v_world
        eta_b_p = usv_state.eta.copy()
        eta_b_p[:2] = Rt[:2, :2] @ usv_state.eta[:2]
        x0[SL_ETA_B] = eta_b_p
        x0[SL_NU_B] = usv_state.nu
        if uav_state is not None:
            x0[UAV_POS_IDX,] = Rt @ uav_state.pos
            x0[UAV_VEL_IDX,] = Rt @ uav_state.vel
        if not np.all(np.isfinite(x0)):
            raise ValueError("non-finite state entering MPC")

        n = self.cfg.n
        ref = np.zeros((n, N_X))
        dz = self.uav_altitude
        r_trail = math.sqrt(max(self.tether_spec.l_uav ** 2 - dz ** 2, 0.0))
        tangent = np.array([1.0, 0.0])
        have_tangent = False
        side = self._ref_side
        for k, sample in enumerate(ref_window[:n]):
            p_p = Rt @ sample.p
            v_p = Rt @ sample.v
            ref[k, SL_P_O] = p_p
            ref[k, SL_V_O] = v_p
            speed = float(np.linalg.norm(sample.v))
            ref[k, SL_NU_B] = (speed, 0.0, 0.0)
            if speed > 1e-6:
                new_tangent = v_p[:2] / speed
                if have_tangent:
                    # turning direction of the reference at this step; on a
                    # straight the cross term vanishes and the side persists
                    cross = (tangent[0] * new_tangent[1]
                             - tangent[1] * new_tangent[0])
                    if abs(cross) > 1e-4:
                        side = math.copysign(1.0, cross)
                tangent = new_tangent
                have_tangent = True
            # hold the UAV abeam on the inside of the turn, one planar
            # tether radius out, where its tension corrects the object's
            # lateral error without fighting the vessel's tow
            ref[k, UAV_POS_IDX[0]] = p_p[0] - side * r_trail * tangent[1]
            ref[k, UAV_POS_IDX[1]] = p_p[1] + side * r_trail * tangent[0]
            ref[k, UAV_VEL_IDX[0]] = v_p[0]
            ref[k, UAV_VEL_IDX[1]] = v_p[1]
            ref[k, UAV_POS_IDX[2]] = self.uav_altitude
        self._ref_side = side

        tether = None
        if not self.single_robot and uav_state is not None:
            try:
                hp = linearize_tether(uav_state.pos, obj_state.eta[:3],
                                      self.tether_spec)
                # keep the band reachable when the UAV is already outside it
                r0 = float(np.linalg.norm(uav_state.pos[:2]
                                          - obj_state.eta[:2]))
                b_min = min(hp.b_min, r0 - 0.02)
                b_max = max(hp.b_max, r0 + 0.02)
                # rotate the half-plane normal into P
                tether = TetherHalfPlanes(normal=Rt[:2, :2] @ hp.normal,
                                          b_min=b_min, b_max=b_max)
                self._last_tether = tether
            except DegenerateGeometry:
                tether = self._last_tether

        # state boxes are planning bounds; expand them to cover the measured
        # state so a bound overshoot in the plant cannot make the QP infeasible
        cfg_step = replace(self.cfg,
                           x_min=np.minimum(self.cfg.x_min, x0 - 1e-9),
                           x_max=np.maximum(self.cfg.x_max, x0 + 1e-9),
                           w_trail=(0.0 if self.single_robot or uav_state is None
                                    else self.cfg.w_trail))
        qp, lay = build_qp(self.model, x0, ref, cfg_step, tether)
        solver = AdmmSolver(qp, self.settings)
        sol = solver.solve(warm=self._warm)
        if sol.status in (Status.PRIMAL_INFEASIBLE, Status.DUAL_INFEASIBLE):
            raise SolverFailed(sol.status)
        self._warm = (sol.x, sol.y)

        states = extract_trajectories(sol.x, lay)
        usv_traj = np.empty((n, 6))
        uav_traj = np.empty((n, 6))
        obj_traj = np.empty((n, 6))
        for k in range(n):
            eta_p = states[k, SL_ETA_B]
            usv_traj[k, :2] = Rw[:2, :2] @ eta_p[:2]
            usv_traj[k, 2] = eta_p[2]
            usv_traj[k, 3:6] = states[k, SL_NU_B]
            uav_traj[k, :3] = Rw @ states[k, UAV_POS_IDX,]
            uav_traj[k, 3:6] = Rw @ states[k, UAV_VEL_IDX,]
            obj_traj[k, :3] = Rw @ states[k, SL_P_O]
            obj_traj[k, 3:6] = Rw @ states[k, SL_V_O]

        first_u = sol.x[lay.u_slice(1)].copy()
        Ax = qp.A_c @ sol.x
        viol = float(np.max(np.maximum(Ax - qp.u, qp.l - Ax).clip(min=0.0)))
        return MpcOutput(usv_traj=usv_traj, uav_traj=uav_traj,
                         obj_traj=obj_traj,
                         first_inputs=first_u, qp_status=sol.status,
                         solve_time=time.perf_counter() - t0,
                         iterations=sol.iterations, violation_max=viol)
