"""Experiment orchestration, metrics, campaigns, and file I/O.

Fixed-step scheduler: plant at 1 kHz, inner-loop controllers at 100 Hz, MPC at
10 Hz. Runs are deterministic given (config, seed); the CSV log format is
frozen and versioned.
"""

import math
import multiprocessing
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import config as cfgmod
from . import frames, inner, mission as missionmod, models, mpc, plant as plantmod
from .mission import Disturbance, MissionPlan
from .qp import SolverSettings, Status

CSV_VERSION = "aquatow-runlog v1"

COLUMNS = [
    "t",
    "obj_x", "obj_y", "obj_z", "obj_vx", "obj_vy", "obj_vz",
    "obj_phi", "obj_theta", "obj_psi",
    "usv_x", "usv_y", "usv_psi", "usv_u", "usv_v", "usv_r",
    "uav_x", "uav_y", "uav_z", "uav_vx", "uav_vy", "uav_vz",
    "ref_x", "ref_y", "ref_z", "dist",
    "usv_tether_len", "uav_tether_len", "usv_tension", "uav_tension",
    "tau_port", "tau_starboard", "uav_ax", "uav_ay", "uav_az",
    "qp_iters", "qp_status", "violation_max",
    "slack_flag", "nolift_flag",
]

STATUS_CODE = {
    None: -1,
    Status.SOLVED: 0,
    Status.MAX_ITER: 1,
    Status.PRIMAL_INFEASIBLE: 2,
    Status.DUAL_INFEASIBLE: 3,
}


class EmptyWindow(Exception):
    pass


class TooFewSamples(Exception):
    pass


class SimulationDiverged(Exception):
    def __init__(self, message: str, partial_log: "RunLog"):
        super().__init__(message)
        self.partial_log = partial_log


@dataclass
class RunLog:
    columns: list
    data: np.ndarray            # (rows, len(columns))
    mode: str = "multi"
    seed: int = 0
    slack_events: int = 0
    nolift_events: int = 0
    solve_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


@dataclass
class Metrics:
    mean_distance: float
    max_distance: float
    mean_distance_full: float
    recovery_time: float | None
    slack_events: int
    nolift_events: int
    solve_time_p95: float


@dataclass
class NormalFit:
    mu: float
    sigma: float
    n_samples: int


@dataclass
class ExperimentConfig:
    mission: MissionPlan
    mode: str = "multi"                  # multi | single
    seed: int = 1
    duration: float = 0.0                # 0 -> mission duration
    dt_plant: float = 1e-3
    inner_every: int = 10                # plant steps per inner-loop tick
    mpc_every: int = 100                 # plant steps per MPC tick
    obj_params: models.ObjectParams = field(default_factory=models.default_object_params)
    usv_params: models.UsvParams = field(default_factory=models.default_usv_params)
    uav_params: models.UavParams = field(default_factory=models.default_uav_params)
    tether: models.TetherSpec = field(default_factory=models.TetherSpec)
    tether_stiffness: float = 2e4
    tether_damping: float = 200.0
    uav_mass: float = 3.5
    usv_attach: tuple = (-1.0, 0.0, 0.0)
    gains: inner.Gains = field(default_factory=inner.Gains)
    # closed-loop solves need speed more than tightness
    solver: SolverSettings = field(default_factory=lambda: SolverSettings(
        eps_abs=1e-4, eps_rel=1e-4, max_iter=4000))
    mpc_n: int = 30
    mpc_dt: float = 0.1
    uav_altitude: float = 3.0
    uav_radial_bias: float = 0.15        # taut-tether pretension offset [m]
    skip: float = 10.0                   # metric warm-up window [s]
    slack_grace: float = 5.0             # startup window excluded from slack events
    uav_alt_step: tuple | None = None    # (t, new altitude) vertical reference step

    def __post_init__(self):
        if self.mode not in ("multi", "single"):
            raise cfgmod.ConfigError(f"unknown mode {self.mode!r}")
        if self.duration <= 0:
            self.duration = self.mission.duration


def config_from_flat(flat: dict[str, str]) -> ExperimentConfig:
    """Build an experiment config from flat dotted key/value pairs."""
    speed = cfgmod.get_float(flat, "mission.speed", 1.0)
    name = cfgmod.get_str(flat, "mission.name", "circle")
    duration = cfgmod.get_float(flat, "mission.duration", 0.0)
    if name == "circle":
        plan = missionmod.circle_mission(speed=speed, duration=duration or 60.0)
    elif name == "line":
        plan = missionmod.line_mission(
            speed=speed, length=cfgmod.get_float(flat, "mission.length", 50.0),
            duration=duration)
    elif name == "disturbance":
        plan = missionmod.disturbance_mission(
            speed=speed, duration=duration or 40.0,
            magnitude=cfgmod.get_float(flat, "disturbance.magnitude", 1000.0),
            t_start=cfgmod.get_float(flat, "disturbance.t_start", 7.0),
            pulse=cfgmod.get_float(flat, "disturbance.duration", 0.5))
    elif name == "random":
        rng = np.random.default_rng(cfgmod.get_int(flat, "mission.seed", 0))
        plan = missionmod.random_plan(rng, speed=speed)
    else:
        raise cfgmod.ConfigError(f"unknown mission {name!r}")

    obj = models.default_object_params(
        radius=cfgmod.get_float(flat, "object.radius", 0.25),
        mass=cfgmod.get_float(flat, "object.mass", 5.0),
        damping=np.array(cfgmod.get_floats(
            flat, "object.damping", [15.0, 15.0, 30.0, 5.0, 5.0, 5.0])))
    usv = models.default_usv_params()
    usv.d_tau = cfgmod.get_float(flat, "usv.d_tau", usv.d_tau)
    usv.tau_max = cfgmod.get_float(flat, "usv.tau_max", usv.tau_max)
    uav = models.UavParams(
        a1=cfgmod.get_float(flat, "uav.a1", 1.0),
        b1=cfgmod.get_float(flat, "uav.b1", 1.0),
        u_max=cfgmod.get_float(flat, "uav.u_max", 5.0),
        v_max=cfgmod.get_float(flat, "uav.v_max", 5.0))
    tether = models.TetherSpec(
        l_usv=cfgmod.get_float(flat, "tether.l_usv", 4.0),
        l_uav=cfgmod.get_float(flat, "tether.l_uav", 5.0),
        epsilon=cfgmod.get_float(flat, "tether.epsilon", 0.3))
    gains = inner.Gains(
        kp_surge=cfgmod.get_float(flat, "gains.kp_surge", 60.0),
        kd_surge=cfgmod.get_float(flat, "gains.kd_surge", 250.0),
        k_along=cfgmod.get_float(flat, "gains.k_along", 0.8),
        kd_along=cfgmod.get_float(flat, "gains.kd_along", 1.6),
        k_sep=cfgmod.get_float(flat, "gains.k_sep", 0.8),
        kp_yaw=cfgmod.get_float(flat, "gains.kp_yaw", 200.0),
        kd_yaw=cfgmod.get_float(flat, "gains.kd_yaw", 150.0),
        uav_kp=cfgmod.get_float(flat, "gains.uav_kp", 25.0),
        uav_kd=cfgmod.get_float(flat, "gains.uav_kd", 10.0))
    solver = SolverSettings(
        eps_abs=cfgmod.get_float(flat, "solver.eps_abs", 1e-4),
        eps_rel=cfgmod.get_float(flat, "solver.eps_rel", 1e-4),
        max_iter=cfgmod.get_int(flat, "solver.max_iter", 4000))
    alt_step = None
    if "uav_alt_step.t" in flat:
        alt_step = (cfgmod.get_float(flat, "uav_alt_step.t", 0.0),
                    cfgmod.get_float(flat, "uav_alt_step.z", 3.0))
    return ExperimentConfig(
        mission=plan,
        mode=cfgmod.get_str(flat, "mode", "multi"),
        seed=cfgmod.get_int(flat, "seed", 1),
        duration=duration,
        obj_params=obj, usv_params=usv, uav_params=uav, tether=tether,
        tether_stiffness=cfgmod.get_float(flat, "plant.stiffness", 2e4),
        tether_damping=cfgmod.get_float(flat, "plant.damping", 200.0),
        uav_mass=cfgmod.get_float(flat, "plant.uav_mass", 3.5),
        gains=gains, solver=solver,
        mpc_n=cfgmod.get_int(flat, "mpc.n", 30),
        mpc_dt=cfgmod.get_float(flat, "mpc.dt", 0.1),
        uav_altitude=cfgmod.get_float(flat, "harness.uav_altitude", 3.0),
        uav_radial_bias=cfgmod.get_float(flat, "harness.uav_radial_bias", 0.15),
        skip=cfgmod.get_float(flat, "harness.skip", 10.0),
        slack_grace=cfgmod.get_float(flat, "harness.slack_grace", 5.0),
        uav_alt_step=alt_step)


def path_turn_side(plan: MissionPlan, t: float, prev: float = 1.0,
                   horizon: float = 2.0) -> float:
    """Side of travel for the UAV: the inside of the upcoming turn.

    +1 is left of travel (inside of a counterclockwise turn), -1 right. On a
    straight — or past the path end — the previous side is kept, so the UAV
    only crosses over when the path actually bends the other way.
    """
    v0 = missionmod.sample_reference(plan, t).v[:2]
    v1 = missionmod.sample_reference(plan, t + horizon).v[:2]
    denom = float(np.linalg.norm(v0) * np.linalg.norm(v1))
    if denom < 1e-9:
        return prev
    cross = float(v0[0] * v1[1] - v0[1] * v1[0]) / denom
    if abs(cross) < 0.01:
        return prev
    return math.copysign(1.0, cross)


def initial_state(cfg: ExperimentConfig) -> plantmod.PlantState:
    """Place the bodies taut on the path start, facing along the path."""
    ref0 = missionmod.sample_reference(cfg.mission, 0.0)
    speed = float(np.linalg.norm(ref0.v))
    tangent = ref0.v / speed if speed > 0 else np.array([1.0, 0.0, 0.0])
    heading = math.atan2(tangent[1], tangent[0])

    obj_eta = np.zeros(6)
    obj_eta[:3] = ref0.p
    obj_eta[2] = 0.0
    obj_eta[5] = heading
    obj = models.ObjectState(eta=obj_eta, nu=np.zeros(6))

    attach_back = abs(cfg.usv_attach[0])
    usv_eta = np.array([
        ref0.p[0] + tangent[0] * (cfg.tether.l_usv + attach_back),
        ref0.p[1] + tangent[1] * (cfg.tether.l_usv + attach_back),
        heading])
    usv = models.UsvState(eta=usv_eta, nu=np.zeros(3))

    uav = None
    if cfg.mode == "multi":
        alt = cfg.uav_altitude
        planar = math.sqrt(max(cfg.tether.l_uav ** 2 - alt ** 2, 0.01))
        # abeam on the inside of the first turn, matching the inner loop
        side = path_turn_side(cfg.mission, 0.0)
        left = np.array([-tangent[1], tangent[0], 0.0])
        eta_u = np.zeros(6)
        eta_u[0::2] = ref0.p + side * planar * left
        eta_u[4] = alt
        uav = models.UavState(eta=eta_u)
    return plantmod.PlantState(object=obj, usv=usv, uav=uav, t=0.0)


def _traj_point(traj: np.ndarray, elapsed: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated row of an MPC trajectory and the next row."""
    n = traj.shape[0]
    idx = elapsed / dt
    k = min(int(idx), n - 1)
    k1 = min(k + 1, n - 1)
    frac = min(max(idx - k, 0.0), 1.0)
    return (1 - frac) * traj[k] + frac * traj[k1], traj[k1]


def run_experiment(cfg: ExperimentConfig) -> RunLog:
    """Closed-loop run at the fixed scheduler rates; deterministic given seed."""
    single = cfg.mode == "single"
    usv_tether = plantmod.TetherModel(cfg.tether_stiffness, cfg.tether_damping,
                                      cfg.tether.l_usv)
    uav_tether = None if single else plantmod.TetherModel(
        cfg.tether_stiffness, cfg.tether_damping, cfg.tether.l_uav)
    plant = plantmod.Plant(cfg.obj_params, cfg.usv_params, cfg.uav_params,
                           usv_tether, uav_tether, uav_mass=cfg.uav_mass,
                           usv_attach=np.array(cfg.usv_attach))
    controller = mpc.MpcController(
        cfg.obj_params, cfg.usv_params, cfg.uav_params, cfg.tether,
        cfg=mpc.default_mpc_config(cfg.usv_params, cfg.uav_params,
                                   n=cfg.mpc_n, dt=cfg.mpc_dt),
        settings=cfg.solver, single_robot=single,
        uav_altitude=cfg.uav_altitude)

    state = initial_state(cfg)
    n_steps = int(round(cfg.duration / cfg.dt_plant))
    rows = []
    solve_times = []
    usv_traj = uav_traj = obj_traj = None
    mpc_t0 = 0.0
    mpc_iters, mpc_status, mpc_viol = 0, None, 0.0
    surge_int = 0.0
    u_ref_prev = 0.0
    uav_brake = False
    uav_side = path_turn_side(cfg.mission, 0.0)
    u_b = np.zeros(2)
    u_u = np.zeros(3)
    cmd_usv = inner.UsvCommand(0.0, 0.0)
    cmd_uav = inner.UavCommand(np.zeros(3))
    slack_events = nolift_events = 0
    slack_timer = 0.0
    slack_open = False
    nolift_open = False
    dt_log = cfg.dt_plant * cfg.inner_every

    def log_row(t: float, slack_flag: int, nolift_flag: int,
                diag: plantmod.PlantDiagnostics, ref: missionmod.RefSample):
        o = state.object
        v_world = frames.euler_rotation(*o.eta[3:6]) @ o.nu[:3]
        if state.uav is not None:
            uav_p, uav_v = state.uav.pos, state.uav.vel
        else:
            uav_p = uav_v = np.zeros(3)
        dist = float(np.hypot(o.eta[0] - ref.p[0], o.eta[1] - ref.p[1]))
        rows.append([
            t, *o.eta[:3], *v_world, *o.eta[3:6],
            *state.usv.eta, *state.usv.nu,
            *uav_p, *uav_v,
            *ref.p, dist,
            diag.usv_length, diag.uav_length,
            float(np.linalg.norm(diag.usv_tension)),
            float(np.linalg.norm(diag.uav_tension)),
            cmd_usv.tau_port, cmd_usv.tau_starboard, *cmd_uav.accel,
            mpc_iters, STATUS_CODE[mpc_status], mpc_viol,
            slack_flag, nolift_flag,
        ])

    def make_log() -> RunLog:
        data = (np.array(rows, dtype=float) if rows
                else np.zeros((0, len(COLUMNS))))
        return RunLog(columns=COLUMNS, data=data, mode=cfg.mode, seed=cfg.seed,
                      slack_events=slack_events, nolift_events=nolift_events,
                      solve_times=np.array(solve_times))

    if n_steps == 0:
        diag = plant.diagnostics(state)
        log_row(0.0, 0, 0, diag, missionmod.sample_reference(cfg.mission, 0.0))
        return make_log()

    try:
        for k in range(n_steps):
            t = k * cfg.dt_plant

            if k % cfg.mpc_every == 0:
                window = missionmod.build_reference_window(
                    cfg.mission, t, cfg.mpc_n, cfg.mpc_dt)
                try:
                    out = controller.control_step(state.object, state.usv,
                                                  state.uav, window)
                    usv_traj, uav_traj = out.usv_traj, out.uav_traj
                    obj_traj = out.obj_traj
                    mpc_t0 = t
                    mpc_iters, mpc_status = out.iterations, out.qp_status
                    mpc_viol = out.violation_max
                    solve_times.append(out.solve_time)
                except mpc.SolverFailed as exc:
                    mpc_status = exc.status   # hold the previous trajectory
                if usv_traj is None:
                    # no trajectory yet: hold the current pose
                    usv_traj = np.tile(np.concatenate(
                        [state.usv.eta, state.usv.nu]), (cfg.mpc_n, 1))
                    obj_traj = np.tile(np.concatenate(
                        [state.object.eta[:3], np.zeros(3)]), (cfg.mpc_n, 1))
                    if state.uav is not None:
                        uav_traj = np.tile(np.concatenate(
                            [state.uav.pos, state.uav.vel]), (cfg.mpc_n, 1))

            if k % cfg.inner_every == 0:
                elapsed = t - mpc_t0
                ref_now = missionmod.sample_reference(cfg.mission, t)

                # the vessel tows from about a tether length ahead of the
                # object, so it steers at the mission path that far ahead
                # (line of sight); the planned trajectory carries no heading
                # information because the plan does not cost the vessel pose
                tow_offset = cfg.tether.l_usv + abs(cfg.usv_attach[0])
                speed = max(float(np.linalg.norm(ref_now.v[:2])), 0.2)
                look = missionmod.sample_reference(
                    cfg.mission, t + tow_offset / speed + 1.0)
                # sight from the towed object, which always trails the
                # look-ahead point; sighting from the vessel can flip the
                # bearing whenever the vessel overtakes it
                d = look.p[:2] - state.object.eta[:2]
                if np.linalg.norm(d) > 0.5:
                    psi_des = math.atan2(d[1], d[0])
                else:
                    psi_des = state.usv.eta[2]
                # surge regulates the towed object onto its planned
                # trajectory: planned object velocity plus a term on the
                # object's along-track error, then a velocity PI below.
                # sample a second into the plan: the plan starts at the
                # measured state, so the early rows only echo it back
                obj_row, _ = _traj_point(obj_traj, elapsed + 1.0, cfg.mpc_dt)
                heading = np.array([math.cos(state.usv.eta[2]),
                                    math.sin(state.usv.eta[2])])
                e_along = float(
                    (obj_row[:2] - state.object.eta[:2]) @ heading)
                o = state.object
                v_obj = frames.euler_rotation(*o.eta[3:6]) @ o.nu[:3]
                ev_along = float((obj_row[3:5] - v_obj[:2]) @ heading)
                # take up tow-tether slack: with the line slack the vessel
                # cannot move the object at all, so restoring separation
                # comes before trajectory tracking (matters after large
                # disturbances, when the object can overrun the vessel)
                sep = float(np.linalg.norm(
                    state.usv.eta[:2] - state.object.eta[:2]))
                u_sep = min(cfg.gains.k_sep * max(tow_offset - sep, 0.0), 2.0)
                u_ref = float(obj_row[3:5] @ heading
                              + cfg.gains.k_along * e_along
                              + cfg.gains.kd_along * ev_along)
                u_ref = float(np.clip(u_ref, controller.cfg.x_min[9],
                                      controller.cfg.x_max[9]))
                # the take-up term may exceed the planning speed box: with
                # the line slack the vessel is not towing anything and can
                # sprint to re-open the separation
                u_ref += u_sep
                # slew-limit the speed command: a step drop slackens the
                # tether and the re-tightening snap restarts the cycle
                u_ref = float(np.clip(u_ref, u_ref_prev - 1.5 * dt_log,
                                      u_ref_prev + 1.5 * dt_log))
                u_ref_prev = u_ref
                ref_eta = np.array([*state.usv.eta[:2], psi_des])
                ref_nu = np.array([u_ref, 0.0, 0.0])
                # integral action carries the steady towing thrust (drag
                # plus tether tension) that a proportional loop cannot hold
                surge_int += cfg.gains.ki_surge * (
                    u_ref - state.usv.nu[0]) * dt_log
                surge_int = float(np.clip(surge_int, -cfg.usv_params.tau_max,
                                          cfg.usv_params.tau_max))
                cmd_usv = inner.usv_reference_controller(
                    state.usv, ref_eta, ref_nu, cfg.gains, cfg.usv_params,
                    ff_thrust=np.array([surge_int / 2.0, surge_int / 2.0]))
                u_b = cmd_usv.as_array()

                if state.uav is not None:
                    uav_row, uav_next = _traj_point(uav_traj, elapsed, cfg.mpc_dt)
                    ref_p = uav_row[:3].copy()
                    ref_v = uav_row[3:6]
                    ff = (uav_next[3:6] - uav_row[3:6]) / cfg.mpc_dt
                    # altitude is commanded directly; the plan's altitude
                    # only mirrors whatever sag the tether has caused
                    ref_p[2] = cfg.uav_altitude
                    if cfg.uav_alt_step is not None and t >= cfg.uav_alt_step[0]:
                        ref_p[2] = cfg.uav_alt_step[1]
                    # fly abeam of the object on the inside of the turn:
                    # along-track object accelerations then load the tether
                    # perpendicular to its line, so tension stays near the
                    # pretension level, and the pull direction corrects the
                    # object's lateral error. the radial reference sits just
                    # outside the measured taut radius: pulling inward
                    # against a taut tether only loads the tether and drags
                    # the vehicle down
                    uav_side = path_turn_side(cfg.mission, t, uav_side)
                    tang = ref_now.v[:2]
                    tn = float(np.linalg.norm(tang))
                    if tn > 1e-6:
                        radial = uav_side * np.array([-tang[1], tang[0]]) / tn
                    else:
                        radial = ref_p[:2] - state.object.eta[:2]
                        rn = float(np.linalg.norm(radial))
                        radial = (radial / rn if rn > 1e-6
                                  else np.array([0.0, 1.0]))
                    dz_uav = state.uav.pos[2] - state.object.eta[2]
                    r_taut = math.sqrt(max(
                        cfg.tether.l_uav ** 2 - dz_uav ** 2, 1e-4))
                    r_ref = r_taut + cfg.uav_radial_bias
                    ref_p[:2] = state.object.eta[:2] + radial * r_ref
                    # sea-anchor brake: when the object runs far above the
                    # path speed (post-disturbance), following the formation
                    # point would chase it; holding position instead lets
                    # the tether drag the runaway object down to speed
                    overspeed = float(np.linalg.norm(
                        v_obj[:2] - ref_now.v[:2]))
                    if overspeed > 1.2:
                        uav_brake = True
                    elif overspeed < 0.6:
                        uav_brake = False
                    if uav_brake:
                        ref_p[:2] = state.uav.pos[:2]
                        ref_v = np.array([*ref_now.v[:2], 0.0])
                        ff = np.zeros(3)
                    cmd_uav = inner.uav_reference_controller(
                        state.uav, ref_p, ref_v, cfg.gains,
                        cfg.uav_params.u_max, ff_accel=ff)
                    # keep the flown velocity inside the planning bound
                    v_max = controller.cfg.x_max[list(mpc.UAV_VEL_IDX)]
                    accel = np.clip(cmd_uav.accel,
                                    (-v_max - state.uav.vel) / 0.1,
                                    (v_max - state.uav.vel) / 0.1)
                    cmd_uav = inner.UavCommand(accel=accel)
                    u_u = cmd_uav.as_array()

                diag = plant.diagnostics(state)
                taut_ok = diag.usv_taut and (single or diag.uav_taut)
                # the taut assumption only applies under way: approaching
                # the end of a path, the planner brakes ahead of time and
                # parking correctly releases all tension
                ref_end = missionmod.sample_reference(
                    cfg.mission, t + cfg.mpc_n * cfg.mpc_dt)
                if float(np.linalg.norm(ref_end.v[:2])) < 0.1:
                    taut_ok = True
                if taut_ok:
                    slack_timer = 0.0
                    slack_open = False
                else:
                    slack_timer += dt_log
                slack_flag = int(slack_timer > 0.5 and t > cfg.slack_grace)
                if slack_flag and not slack_open:
                    slack_events += 1
                    slack_open = True
                nolift_flag = int(not diag.no_lifting_ok)
                if nolift_flag and not nolift_open:
                    nolift_events += 1
                nolift_open = bool(nolift_flag)

                log_row(t, slack_flag, nolift_flag, diag, ref_now)

            state = plant.step(state, u_b, u_u, cfg.mission.disturbances,
                               cfg.dt_plant)
    except plantmod.NumericBlowup as exc:
        raise SimulationDiverged(str(exc), make_log()) from exc

    return make_log()


# -- metrics ---------------------------------------------------------------

def mean_distance(log: RunLog, skip: float = 0.0) -> float:
    t = log.col("t")
    mask = t >= skip
    if not np.any(mask):
        raise EmptyWindow(f"no samples after skip={skip}")
    return float(np.mean(log.col("dist")[mask]))


def max_distance(log: RunLog, skip: float = 0.0) -> float:
    t = log.col("t")
    mask = t >= skip
    if not np.any(mask):
        raise EmptyWindow(f"no samples after skip={skip}")
    return float(np.max(log.col("dist")[mask]))


def recovery_time(log: RunLog, disturbance: Disturbance,
                  threshold: float | None = None,
                  hold: float = 1.0) -> float | None:
    """Time from disturbance end until the tracking distance re-enters and
    stays below the threshold for at least `hold` seconds. None if never."""
    t = log.col("t")
    dist = log.col("dist")
    t_end = disturbance.t_start + disturbance.duration
    if t[-1] < disturbance.t_start:
        raise ValueError("disturbance not within log")
    if threshold is None:
        pre = (t >= disturbance.t_start / 2.0) & (t < disturbance.t_start)
        if not np.any(pre):
            raise EmptyWindow("no pre-disturbance window")
        threshold = float(np.mean(dist[pre]))
    after = t >= t_end
    ta, da = t[after], dist[after]
    below = da < threshold
    i = 0
    n = len(ta)
    while i < n:
        if below[i]:
            j = i
            while j < n and below[j]:
                j += 1
            if ta[j - 1] - ta[i] >= hold:
                return float(ta[i] - t_end)
            i = j
        else:
            i += 1
    return None


def fit_normal(samples) -> NormalFit:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise TooFewSamples("need at least 2 samples")
    return NormalFit(mu=float(np.mean(samples)),
                     sigma=float(np.std(samples, ddof=1)),
                     n_samples=int(samples.size))


def compute_metrics(log: RunLog, skip: float = 10.0,
                    disturbance: Disturbance | None = None) -> Metrics:
    rec = None
    if disturbance is not None:
        rec = recovery_time(log, disturbance)
    p95 = (float(np.percentile(log.solve_times, 95))
           if log.solve_times.size else 0.0)
    skip_eff = min(skip, float(log.col("t")[-1]) / 2.0) if log.data.size else 0.0
    return Metrics(
        mean_distance=mean_distance(log, skip_eff),
        max_distance=max_distance(log, skip_eff),
        mean_distance_full=mean_distance(log, 0.0),
        recovery_time=rec,
        slack_events=log.slack_events,
        nolift_events=log.nolift_events,
        solve_time_p95=p95)


# -- file I/O --------------------------------------------------------------

class IoFailure(Exception):
    pass


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def export_csv(log: RunLog, path) -> None:
    try:
        with open(path, "w") as f:
            f.write(f"# {CSV_VERSION}\n")
            f.write(",".join(log.columns) + "\n")
            for row in log.data:
                f.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_csv(path) -> RunLog:
    try:
        with open(path) as f:
            header = f.readline()
            if CSV_VERSION not in header:
                raise IoFailure(f"unrecognized log header: {header.strip()!r}")
            columns = f.readline().strip().split(",")
            body = f.read()
        data = (np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
                if body.strip() else np.zeros((0, len(columns))))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return RunLog(columns=columns, data=data)


def export_summary(metrics: Metrics, path) -> None:
    try:
        with open(path, "w") as f:
            f.write(f"mean_distance = {_fmt(metrics.mean_distance)}\n")
            f.write(f"max_distance = {_fmt(metrics.max_distance)}\n")
            f.write(f"mean_distance_full = {_fmt(metrics.mean_distance_full)}\n")
            rec = "absent" if metrics.recovery_time is None else _fmt(metrics.recovery_time)
            f.write(f"recovery_time = {rec}\n")
            f.write(f"slack_events = {metrics.slack_events}\n")
            f.write(f"nolift_events = {metrics.nolift_events}\n")
            f.write(f"solve_time_p95 = {_fmt(metrics.solve_time_p95)}\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def export_signals(log: RunLog, out_dir) -> None:
    """Plot-ready (t, value) files for distance and speeds."""
    t = log.col("t")
    signals = {
        "distance": log.col("dist"),
        "obj_speed": np.hypot(log.col("obj_vx"), log.col("obj_vy")),
        "usv_speed": np.hypot(log.col("usv_u"), log.col("usv_v")),
        "uav_speed": np.hypot(log.col("uav_vx"), log.col("uav_vy")),
    }
    os.makedirs(out_dir, exist_ok=True)
    for name, values in signals.items():
        with open(os.path.join(out_dir, f"{name}.txt"), "w") as f:
            for ti, vi in zip(t, values):
                f.write(f"{_fmt(ti)} {_fmt(vi)}\n")


# -- campaign --------------------------------------------------------------

@dataclass
class CampaignResult:
    pair_means: list                  # [(multi_mean, single_mean), ...]
    fits: dict                        # mode -> NormalFit
    failures: list


def _campaign_worker(args):
    cfg, plan_idx = args
    try:
        log = run_experiment(cfg)
        skip = min(cfg.skip, cfg.duration / 2.0)
        return (plan_idx, cfg.mode, mean_distance(log, skip), None)
    except (SimulationDiverged, EmptyWindow) as exc:
        return (plan_idx, cfg.mode, None, str(exc))


def run_campaign(base_cfg: ExperimentConfig, n_pairs: int = 30,
                 jobs: int | None = None,
                 max_duration: float = 45.0) -> CampaignResult:
    """Paired multi- vs single-robot campaign over randomized trajectories."""
    rng = np.random.default_rng(base_cfg.seed)
    tasks = []
    for i in range(n_pairs):
        plan = missionmod.random_plan(rng)
        duration = min(plan.duration, max_duration)
        for mode in ("multi", "single"):
            cfg = replace(base_cfg, mission=plan, mode=mode, duration=duration)
            tasks.append((cfg, i))

    jobs = jobs or min(n_pairs * 2, multiprocessing.cpu_count())
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_campaign_worker, tasks)
    else:
        results = [_campaign_worker(t) for t in tasks]

    by_pair: dict[int, dict[str, float]] = {}
    failures = []
    for idx, mode, value, err in sorted(results, key=lambda r: (r[0], r[1])):
        if err is not None:
            failures.append((idx, mode, err))
        else:
            by_pair.setdefault(idx, {})[mode] = value

    pair_means = [(v["multi"], v["single"]) for i, v in sorted(by_pair.items())
                  if "multi" in v and "single" in v]
    fits = {}
    for j, mode in ((0, "multi"), (1, "single")):
        samples = [p[j] for p in pair_means]
        if len(samples) >= 2:
            fits[mode] = fit_normal(samples)
    return CampaignResult(pair_means=pair_means, fits=fits, failures=failures)


def export_campaign_summary(result: CampaignResult, path) -> None:
    try:
        with open(path, "w") as f:
            for mode, fit in sorted(result.fits.items()):
                f.write(f"{mode}.mu = {_fmt(fit.mu)}\n")
                f.write(f"{mode}.sigma = {_fmt(fit.sigma)}\n")
                f.write(f"{mode}.n = {fit.n_samples}\n")
            wins = sum(1 for m, s in result.pair_means if m < s)
            f.write(f"pairs = {len(result.pair_means)}\n")
            f.write(f"multi_wins = {wins}\n")
            f.write(f"failures = {len(result.failures)}\n")
            for i, (m, s) in enumerate(result.pair_means):
                f.write(f"pair.{i}.multi = {_fmt(m)}\n")
                f.write(f"pair.{i}.single = {_fmt(s)}\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
