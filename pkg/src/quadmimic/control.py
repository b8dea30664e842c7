"""Model-based imitation controller.

Per control tick (default 500 Hz) the controller samples the reference
motion, advances a per-leg stance/swing state machine against measured
foot forces, and dispatches:

* stance legs: a CoM PD law produces a desired body acceleration, the
  stance QP distributes it over ground reaction forces, and each leg
  applies tau = -J^T R^T f. On top of that, the joint targets drift
  opposite the commanded CoM velocity (the stance foot should stay put
  in the world while the body moves over it) and are tracked with a
  low-gain PD.
* swing legs: the reference foot path, shifted against the CoM velocity
  tracking error, goes through IK to a high-gain joint PD. A classic
  heuristic footstep baseline (fixed swing time, linear path to a
  velocity-projected footstep) is available as an alternative policy.

Frames: all foot targets live in the yaw-aligned robot frame, matching
the reference motion convention; IK runs in the body frame, so targets
pass through the roll/pitch tilt on the way in and out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import rot_x, rot_y, rot_z, rot_zyx, wrap_angle
from .motion import ReferenceFrame, ReferenceMotion, sample
from .qp import QpSolution, StanceQpConfig, build_stance_problem, solve
from .robot import (
    N_LEGS,
    RobotModel,
    foot_positions,
    forward_kinematics,
    inverse_kinematics,
    leg_jacobian,
)
from .sim import (
    JointCommand,
    SimState,
    foot_positions_world,
    measured_contact,
    motor_torque,
)

SWING = 0
STANCE = 1

_MODE_NAMES = {SWING: "swing", STANCE: "stance"}


@dataclass(frozen=True)
class ControllerConfig:
    """All controller constants; one committed default set for every gait."""

    kp_com: tuple = (50.0, 50.0, 100.0, 100.0, 100.0, 50.0)  # lin xyz, ang rpy
    kd_com: tuple = (10.0, 10.0, 20.0, 20.0, 20.0, 10.0)
    qp: StanceQpConfig = StanceQpConfig()
    f_thresh: float = 10.0            # N, measured-contact threshold
    swing_feedback: tuple = (0.03, 0.03, 0.0)  # s, velocity-error footstep gain
    stance_kp: float = 15.0           # low-gain joint PD under stance
    stance_kd: float = 0.5
    swing_kp: float = 100.0           # high-gain joint PD under swing
    swing_kd: float = 2.0
    min_switch_time: float = 0.1      # s, FSM hysteresis
    control_dt: float = 2.0e-3        # s
    swing_policy: str = "reference"   # "reference" | "raibert"
    t_swing: float = 0.25             # s, fixed swing duration of the baseline
    raibert_clearance: float = 0.05   # m, baseline swing apex

    def __post_init__(self):
        if min(self.kp_com + self.kd_com) < 0 or min(
            self.stance_kp, self.stance_kd, self.swing_kp, self.swing_kd
        ) < 0:
            raise ValueError("controller gains must be non-negative")
        if self.min_switch_time < 0 or self.control_dt <= 0 or self.t_swing <= 0:
            raise ValueError("min_switch_time >= 0, control_dt > 0, t_swing > 0 required")
        if self.swing_policy not in ("reference", "raibert"):
            raise ValueError(f"unknown swing_policy {self.swing_policy!r}")


@dataclass
class LegMode:
    mode: int = STANCE
    time_since_switch: float = 0.0
    swing_phase: float = 0.0


def plan_gait(desired_contact, measured_contact_flags, leg_modes, dt, min_switch_time=0.1):
    """Advance the per-leg FSM one tick; mutates and returns leg_modes.

    Edges: stance legs lift off when the reference says swing, or early
    when measured contact disappears; swing legs touch down on measured
    contact, scheduled or early. No leg switches twice within
    min_switch_time. Entering swing resets swing_phase.
    """
    for leg, lm in enumerate(leg_modes):
        lm.time_since_switch += dt
        if lm.time_since_switch < min_switch_time:
            continue
        want = bool(desired_contact[leg])
        have = bool(measured_contact_flags[leg])
        if lm.mode == STANCE and not (want and have):
            lm.mode = SWING
            lm.time_since_switch = 0.0
            lm.swing_phase = 0.0
        elif lm.mode == SWING and have:
            lm.mode = STANCE
            lm.time_since_switch = 0.0
    return leg_modes


def desired_com_accel(ref: ReferenceFrame, state: SimState, config: ControllerConfig) -> np.ndarray:
    """6-vector (linear, angular) CoM acceleration from PD on the pose error."""
    err = np.concatenate(
        [ref.com_pos - state.com_pos, wrap_angle(ref.com_rpy - state.com_rpy)]
    )
    derr = np.concatenate(
        [ref.com_lin_vel - state.com_lin_vel, ref.com_ang_vel - state.com_ang_vel]
    )
    return np.asarray(config.kp_com) * err + np.asarray(config.kd_com) * derr


def _tilt(rpy) -> np.ndarray:
    """Body -> robot-frame rotation (the roll/pitch part of the attitude)."""
    return rot_y(rpy[1]) @ rot_x(rpy[0])


@dataclass
class StanceResult:
    tau_ff: np.ndarray        # (12,), zero on swing legs
    q_target: np.ndarray      # (12,), adaptation targets on stance legs
    adapt_feet: np.ndarray    # (4,3) robot frame, nan on swing legs
    forces: np.ndarray        # (4,3) world forces the QP committed to
    qp_status: str
    qp_iterations: int


def stance_control(
    state: SimState,
    ref: ReferenceFrame,
    leg_modes,
    model: RobotModel,
    config: ControllerConfig,
    memory: ControllerState | None = None,
) -> StanceResult:
    """Stance-force QP plus per-leg joint-target adaptation."""
    stance_legs = [leg for leg in range(N_LEGS) if leg_modes[leg].mode == STANCE]
    if not stance_legs:
        raise ValueError("stance_control requires at least one stance leg")

    accel = desired_com_accel(ref, state, config)
    feet_w = foot_positions_world(model, state)
    problem = build_stance_problem(
        model, state.com_pos, state.com_rpy, feet_w, stance_legs, accel, config.qp
    )
    sol = solve(problem, warm_start=memory.prev_qp if memory else None)

    forces = np.zeros((N_LEGS, 3))
    if sol.status == "Infeasible":
        # hold last committed forces rather than dropping the body
        if memory is not None:
            forces = memory.prev_forces.copy()
            memory.diagnostics.append(
                f"t={state.time:.4f}: stance QP infeasible, holding previous forces"
            )
    else:
        for k, leg in enumerate(stance_legs):
            forces[leg] = sol.forces[3 * k : 3 * k + 3]
        if memory is not None:
            memory.prev_qp = sol
            memory.prev_forces = forces.copy()

    R = rot_zyx(state.com_rpy)
    tilt = _tilt(state.com_rpy)
    vd_robot = rot_z(state.com_rpy[2]).T @ ref.com_lin_vel

    tau_ff = np.zeros(12)
    q_target = state.joint_pos.copy()
    adapt = np.full((N_LEGS, 3), np.nan)
    for leg in stance_legs:
        sl = slice(3 * leg, 3 * leg + 3)
        q_leg = state.joint_pos[sl]
        W = R @ leg_jacobian(model, leg, q_leg)
        tau_ff[sl] = -W.T @ forces[leg]
        # the stance foot holds its ground point: its body-frame target
        # moves opposite the commanded CoM velocity
        foot_r = tilt @ forward_kinematics(model, leg, q_leg)
        target_r = foot_r - vd_robot * config.control_dt
        adapt[leg] = target_r
        joints, clamped = inverse_kinematics(model, leg, tilt.T @ target_r)
        q_target[sl] = joints.as_array()
        if clamped and memory is not None:
            memory.diagnostics.append(
                f"t={state.time:.4f}: leg {leg} stance adaptation target clamped"
            )
    return StanceResult(tau_ff, q_target, adapt, forces, sol.status, sol.iterations)


@dataclass
class SwingResult:
    q_target: np.ndarray       # (12,), swing legs updated
    targets_robot: np.ndarray  # (4,3) robot frame, nan on stance legs
    clamped: np.ndarray        # (4,) bool, IK clamps


def swing_control(
    state: SimState,
    ref: ReferenceFrame,
    leg_modes,
    model: RobotModel,
    config: ControllerConfig,
    memory: ControllerState | None = None,
) -> SwingResult:
    """Reference-tracking swing: foot path shifted against the velocity error."""
    Rz = rot_z(state.com_rpy[2])
    vel_err = Rz.T @ ref.com_lin_vel - Rz.T @ state.com_lin_vel
    shift = -np.asarray(config.swing_feedback) * vel_err
    tilt = _tilt(state.com_rpy)

    q_target = state.joint_pos.copy()
    targets = np.full((N_LEGS, 3), np.nan)
    clamped = np.zeros(N_LEGS, dtype=bool)
    for leg in range(N_LEGS):
        if leg_modes[leg].mode != SWING:
            continue
        target_r = ref.foot_pos[leg] + shift
        targets[leg] = target_r
        joints, hit = inverse_kinematics(model, leg, tilt.T @ target_r)
        q_target[3 * leg : 3 * leg + 3] = joints.as_array()
        clamped[leg] = hit
        if hit and memory is not None:
            memory.diagnostics.append(
                f"t={state.time:.4f}: leg {leg} swing target out of reach, clamped"
            )
    return SwingResult(q_target, targets, clamped)


def raibert_swing_target(
    state: SimState,
    ref: ReferenceFrame,
    model: RobotModel,
    config: ControllerConfig,
    t_swing: float,
) -> np.ndarray:
    """(4,3) robot-frame footstep targets of the heuristic baseline.

    Each footstep sits at the neutral point under the hip, projected
    forward by half a swing period of the measured CoM velocity and
    corrected against the velocity tracking error. z is the neutral
    stance depth; the swing path to the footstep is linear with a fixed
    half-sine clearance bump.
    """
    Rz = rot_z(state.com_rpy[2])
    v_robot = Rz.T @ state.com_lin_vel
    vd_robot = Rz.T @ ref.com_lin_vel
    offset = 0.5 * t_swing * v_robot - np.asarray(config.swing_feedback) * (vd_robot - v_robot)
    offset[2] = 0.0
    neutral = foot_positions(model, model.default_stance_joints)
    return neutral + offset


def _raibert_swing(
    state: SimState,
    ref: ReferenceFrame,
    leg_modes,
    model: RobotModel,
    config: ControllerConfig,
    memory: ControllerState,
) -> SwingResult:
    """Baseline swing dispatch: linear path from liftoff to the footstep."""
    steps = raibert_swing_target(state, ref, model, config, config.t_swing)
    tilt = _tilt(state.com_rpy)
    q_target = state.joint_pos.copy()
    targets = np.full((N_LEGS, 3), np.nan)
    clamped = np.zeros(N_LEGS, dtype=bool)
    for leg in range(N_LEGS):
        lm = leg_modes[leg]
        if lm.mode != SWING:
            continue
        s = lm.swing_phase
        target_r = (1.0 - s) * memory.liftoff_feet[leg] + s * steps[leg]
        target_r[2] += config.raibert_clearance * math.sin(math.pi * s)
        targets[leg] = target_r
        joints, hit = inverse_kinematics(model, leg, tilt.T @ target_r)
        q_target[3 * leg : 3 * leg + 3] = joints.as_array()
        clamped[leg] = hit
    return SwingResult(q_target, targets, clamped)


# ------------------------------------------------------------ composition ---

_CTRL_LOG_TAG = "quadmimic-ctrllog v1"

CTRL_LOG_COLUMNS = (
    ["t"]
    + [f"mode{i}" for i in range(4)]
    + ["qp_status", "qp_iterations"]
    + [f"adapt{i}_{ax}" for i in range(4) for ax in "xyz"]
    + [f"tau{i}" for i in range(12)]
)


@dataclass
class ControllerState:
    """Per-episode mutable controller memory. Never shared across episodes."""

    model: RobotModel
    config: ControllerConfig = field(default_factory=ControllerConfig)
    leg_modes: list = None
    prev_qp: QpSolution | None = None
    prev_forces: np.ndarray = None
    liftoff_feet: np.ndarray = None
    diagnostics: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)
    keep_log: bool = False

    def __post_init__(self):
        if self.leg_modes is None:
            hold = self.config.min_switch_time  # start free to switch
            self.leg_modes = [LegMode(STANCE, hold, 0.0) for _ in range(N_LEGS)]
        if self.prev_forces is None:
            self.prev_forces = np.zeros((N_LEGS, 3))
        if self.liftoff_feet is None:
            self.liftoff_feet = foot_positions(self.model, self.model.default_stance_joints)

    def start_from(self, desired_contact) -> None:
        """Align leg modes with a reference's initial contact pattern.

        Timers start expired so the gait schedule is free to switch
        immediately; episodes must start with the contact springs loaded
        (see episode initializers), or the take-off edge fires on feet
        that merely have not settled yet.
        """
        self.leg_modes = [
            LegMode(
                STANCE if desired_contact[leg] else SWING,
                self.config.min_switch_time,
                0.0,
            )
            for leg in range(N_LEGS)
        ]

    def save_log(self, path) -> None:
        lines = [f"# {_CTRL_LOG_TAG}", ",".join(CTRL_LOG_COLUMNS)]
        for row in self.log_rows:
            lines.append(",".join(str(v) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def control_step(
    state: SimState,
    motion: ReferenceMotion,
    t: float,
    ctrl: ControllerState,
) -> JointCommand:
    """One controller tick: sample, plan, dispatch, assemble a JointCommand."""
    model, cfg = ctrl.model, ctrl.config
    ref = sample(motion, t)
    measured = measured_contact(state, cfg.f_thresh)

    before = [lm.mode for lm in ctrl.leg_modes]
    plan_gait(ref.contact, measured, ctrl.leg_modes, cfg.control_dt, cfg.min_switch_time)

    tilt = _tilt(state.com_rpy)
    any_stance = False
    any_swing = False
    for leg, lm in enumerate(ctrl.leg_modes):
        if lm.mode == SWING:
            any_swing = True
            if before[leg] == STANCE:
                q_leg = state.joint_pos[3 * leg : 3 * leg + 3]
                ctrl.liftoff_feet[leg] = tilt @ forward_kinematics(model, leg, q_leg)
            lm.swing_phase = min(lm.time_since_switch / cfg.t_swing, 1.0)
        else:
            any_stance = True

    tau_ff = np.zeros(12)
    q_target = state.joint_pos.copy()
    kp = np.empty(12)
    kd = np.empty(12)
    qp_status, qp_iters = "NoStance", 0
    adapt = np.full((N_LEGS, 3), np.nan)

    if any_stance:
        st = stance_control(state, ref, ctrl.leg_modes, model, cfg, memory=ctrl)
        tau_ff = st.tau_ff
        adapt = st.adapt_feet
        qp_status, qp_iters = st.qp_status, st.qp_iterations
        for leg in range(N_LEGS):
            if ctrl.leg_modes[leg].mode == STANCE:
                sl = slice(3 * leg, 3 * leg + 3)
                q_target[sl] = st.q_target[sl]
                kp[sl], kd[sl] = cfg.stance_kp, cfg.stance_kd
    if any_swing:
        if cfg.swing_policy == "reference":
            sw = swing_control(state, ref, ctrl.leg_modes, model, cfg, memory=ctrl)
        else:
            sw = _raibert_swing(state, ref, ctrl.leg_modes, model, cfg, ctrl)
        for leg in range(N_LEGS):
            if ctrl.leg_modes[leg].mode == SWING:
                sl = slice(3 * leg, 3 * leg + 3)
                q_target[sl] = sw.q_target[sl]
                kp[sl], kd[sl] = cfg.swing_kp, cfg.swing_kd

    tau_ff = np.clip(tau_ff, -model.torque_limits, model.torque_limits)
    cmd = JointCommand(
        tau_ff=tau_ff,
        q_target=q_target,
        qd_target=np.zeros(12),
        kp=kp,
        kd=kd,
    )
    if ctrl.keep_log:
        applied = motor_torque(model, cmd, state.joint_pos, state.joint_vel)
        row = (
            [repr(float(t))]
            + [_MODE_NAMES[lm.mode] for lm in ctrl.leg_modes]
            + [qp_status, qp_iters]
            + [repr(float(v)) for v in adapt.ravel()]
            + [repr(float(v)) for v in applied]
        )
        ctrl.log_rows.append(row)
    return cmd
