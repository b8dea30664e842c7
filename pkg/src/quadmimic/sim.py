"""Centroidal rigid-body simulator with massless position-controlled legs.

One floating rigid body carries all the mass. The legs are kinematic
chains whose joints follow PD-plus-feedforward commands through a small
virtual rotor inertia; they have no mass of their own, so their only
coupling to the body is the ground reaction at the feet. Ground contact
is a penalty law: vertical spring-damper plus regularized Coulomb
friction (viscous below a breakaway slip speed, exact cone bound above).

Integration, fixed step dt <= 2 ms:

* contact forces are implicit in all end-of-step velocities: each
  contacting leg's joint update is eliminated into an affine relation
  between its foot force and the new body velocity, leaving one 6x6
  solve for the body. Sticking friction and the contact damper are far
  too stiff for an explicit update at the default rates; the body roll
  mode, with its small inertia, is the first to go unstable if the
  damping acts a step late.
* positions update trapezoidally from old and new velocity, which is
  exact on ballistic arcs.
* orientation integrates ZYX Euler rates from the midpoint world
  angular velocity. There is no gyroscopic term: torque-free flight
  keeps the angular velocity constant, matching the body model the
  stance controller assumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergedError, SchemaError
from .geom import euler_rate_matrix_zyx, rot_z, rot_zyx, skew
from .motion import COLUMNS, ReferenceMotion
from .robot import (
    N_LEGS,
    RobotModel,
    foot_positions,
    forward_kinematics,
    leg_jacobian,
)

GRAVITY = 9.8  # m/s^2

SIM_DT = 1.0e-3        # default integration step, s
JOINT_INERTIA = 0.01   # virtual rotor inertia per joint, kg m^2
JOINT_DAMPING = 0.05   # viscous joint damping, N m s/rad

_POS_LIMIT = 100.0     # m, divergence guard
_VEL_LIMIT = 100.0     # m/s and rad/s, divergence guard


@dataclass(frozen=True)
class ContactParams:
    """Penalty ground model parameters."""

    stiffness: float = 1.0e4       # N/m, normal spring
    damping: float = 300.0         # N s/m, normal damper
    friction: float = 0.6          # Coulomb mu
    ground_height: float = 0.0     # world z of the contact plane, m
    breakaway_speed: float = 0.01  # m/s, friction is viscous below this slip

    def __post_init__(self):
        if self.stiffness <= 0.0 or self.damping <= 0.0:
            raise ValueError("ground stiffness and damping must be positive")
        if self.friction < 0.0 or self.breakaway_speed <= 0.0:
            raise ValueError("friction must be >= 0 and breakaway_speed > 0")


@dataclass
class SimState:
    com_pos: np.ndarray      # (3,) world, m
    com_rpy: np.ndarray      # (3,) roll, pitch, yaw, rad
    com_lin_vel: np.ndarray  # (3,) world, m/s
    com_ang_vel: np.ndarray  # (3,) world, rad/s
    joint_pos: np.ndarray    # (12,) rad, leg-major (FR, FL, RR, RL)
    joint_vel: np.ndarray    # (12,) rad/s
    foot_force: np.ndarray   # (4,3) world, N; zero for feet off the ground
    time: float = 0.0

    def copy(self) -> SimState:
        return SimState(
            self.com_pos.copy(),
            self.com_rpy.copy(),
            self.com_lin_vel.copy(),
            self.com_ang_vel.copy(),
            self.joint_pos.copy(),
            self.joint_vel.copy(),
            self.foot_force.copy(),
            self.time,
        )


@dataclass
class JointCommand:
    """Per-joint PD plus feedforward, 12-vectors in leg-major order."""

    tau_ff: np.ndarray
    q_target: np.ndarray
    qd_target: np.ndarray
    kp: np.ndarray
    kd: np.ndarray

    @classmethod
    def zeros(cls) -> JointCommand:
        return cls(np.zeros(12), np.zeros(12), np.zeros(12), np.zeros(12), np.zeros(12))


def motor_torque(model: RobotModel, command: JointCommand, q, qd) -> np.ndarray:
    """Saturated motor torque at the given joint state."""
    tau = (
        command.tau_ff
        + command.kp * (command.q_target - q)
        + command.kd * (command.qd_target - qd)
    )
    return np.clip(tau, -model.torque_limits, model.torque_limits)


def _cross(a, b) -> np.ndarray:
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def _ground_force(penetration: float, v_foot, params: ContactParams) -> np.ndarray:
    """World-frame force of the ground on one foot point.

    Normal: stiffness * penetration - damping * v_z, floored at zero (the
    ground cannot pull). Tangential: -mu * f_n * v_t / max(|v_t|, breakaway),
    so |f_t| <= mu * f_n holds by construction and the bound is attained
    exactly once the foot slides faster than the breakaway speed.
    """
    if penetration <= 0.0:
        return np.zeros(3)
    fn = params.stiffness * penetration - params.damping * v_foot[2]
    if fn <= 0.0:
        return np.zeros(3)
    slip = math.hypot(v_foot[0], v_foot[1])
    s = -params.friction * fn / max(slip, params.breakaway_speed)
    return np.array([s * v_foot[0], s * v_foot[1], fn])


def contact_forces(model: RobotModel, state: SimState, params: ContactParams) -> np.ndarray:
    """(4,3) world ground forces evaluated at the state's own configuration."""
    R = rot_zyx(state.com_rpy)
    out = np.zeros((N_LEGS, 3))
    for leg in range(N_LEGS):
        sl = slice(3 * leg, 3 * leg + 3)
        q = state.joint_pos[sl]
        r = R @ forward_kinematics(model, leg, q)
        pen = params.ground_height - (state.com_pos[2] + r[2])
        if pen <= 0.0:
            continue
        W = R @ leg_jacobian(model, leg, q)
        v = state.com_lin_vel + _cross(state.com_ang_vel, r) + W @ state.joint_vel[sl]
        out[leg] = _ground_force(pen, v, params)
    return out


def foot_positions_world(model: RobotModel, state: SimState) -> np.ndarray:
    """(4,3) world foot positions."""
    R = rot_zyx(state.com_rpy)
    return state.com_pos + foot_positions(model, state.joint_pos) @ R.T


def step(
    state: SimState,
    command: JointCommand,
    model: RobotModel,
    params: ContactParams,
    dt: float = SIM_DT,
    joint_inertia: float = JOINT_INERTIA,
    joint_damping: float = JOINT_DAMPING,
) -> SimState:
    """Advance one timestep. Deterministic; raises DivergedError on blowup."""
    if not 0.0 < dt <= 2.0e-3:
        raise ValueError(f"dt must be in (0, 2e-3] s, got {dt}")

    R = rot_zyx(state.com_rpy)
    tau = motor_torque(model, command, state.joint_pos, state.joint_vel)

    inertia_rate = joint_inertia / dt
    free_diag = inertia_rate + joint_damping
    rhs_all = inertia_rate * state.joint_vel + tau

    # Per-leg contact linearization about the start-of-step state. The
    # force law f = f0 - D v_foot taken at end-of-step velocities turns
    # the joint update into qd+ = m_vec - n_mat v_b and the force into
    # g - h_mat v_b, with v_b the new body velocity carried to the foot.
    contact: dict[int, tuple] = {}
    for leg in range(N_LEGS):
        sl = slice(3 * leg, 3 * leg + 3)
        q = state.joint_pos[sl]
        r = R @ forward_kinematics(model, leg, q)
        pen = params.ground_height - (state.com_pos[2] + r[2])
        if pen <= 0.0:
            continue
        W = R @ leg_jacobian(model, leg, q)
        v_foot = state.com_lin_vel + _cross(state.com_ang_vel, r) + W @ state.joint_vel[sl]
        fn = params.stiffness * pen - params.damping * v_foot[2]
        if fn <= 0.0:
            continue
        slip = math.hypot(v_foot[0], v_foot[1])
        ct = params.friction * fn / max(slip, params.breakaway_speed)
        damp = np.array([ct, ct, params.damping])
        f0 = np.array([0.0, 0.0, params.stiffness * pen])
        wtd = W.T * damp
        lhs = free_diag * np.eye(3) + wtd @ W
        sol = np.linalg.solve(lhs, np.column_stack([rhs_all[sl] + W.T @ f0, wtd]))
        m_vec, n_mat = sol[:, 0], sol[:, 1:]
        g = f0 - damp * (W @ m_vec)
        h_mat = np.diag(damp) - (damp[:, None] * W) @ n_mat
        contact[leg] = (r, m_vec, n_mat, g, h_mat)

    # Body: gravity plus the contact wrench about the CoM, with the
    # contact part implicit in the new body velocity. No gyroscopic
    # term, so torque-free flight keeps the angular velocity constant.
    inertia_w = R @ model.inertia_body @ R.T
    gravity_vec = np.array([0.0, 0.0, -GRAVITY])
    while contact:
        a_mat = np.zeros((6, 6))
        a_mat[:3, :3] = model.mass * np.eye(3)
        a_mat[3:, 3:] = inertia_w
        c_vec = np.concatenate(
            [model.mass * (state.com_lin_vel + dt * gravity_vec), inertia_w @ state.com_ang_vel]
        )
        for r, _, _, g, h_mat in contact.values():
            p_mat = np.vstack([np.eye(3), skew(r)])
            a_mat += dt * (p_mat @ h_mat) @ p_mat.T
            c_vec += dt * (p_mat @ g)
        u = np.linalg.solve(a_mat, c_vec)
        v_new, w_new = u[:3], u[3:]
        # The linearization cannot see a foot separating; a pulling normal
        # force means that leg has left contact within this step.
        pulling = [
            leg
            for leg, (r, _, _, g, h_mat) in contact.items()
            if (g - h_mat @ (v_new + _cross(w_new, r)))[2] < 0.0
        ]
        if not pulling:
            break
        for leg in pulling:
            del contact[leg]
    if not contact:
        v_new = state.com_lin_vel + dt * gravity_vec
        w_new = state.com_ang_vel.copy()

    q_new = np.empty(12)
    qd_new = np.empty(12)
    for leg in range(N_LEGS):
        sl = slice(3 * leg, 3 * leg + 3)
        if leg in contact:
            r, m_vec, n_mat, _, _ = contact[leg]
            qd_leg = m_vec - n_mat @ (v_new + _cross(w_new, r))
        else:
            qd_leg = rhs_all[sl] / free_diag
        qd_new[sl] = qd_leg
        q_new[sl] = state.joint_pos[sl] + dt * qd_leg

    pos_new = state.com_pos + (0.5 * dt) * (state.com_lin_vel + v_new)

    if abs(math.cos(state.com_rpy[1])) < 1e-6:
        raise DivergedError(f"pitch at gimbal lock at t = {state.time:.4f}")
    E = euler_rate_matrix_zyx(state.com_rpy)
    rpy_new = state.com_rpy + dt * np.linalg.solve(E, 0.5 * (state.com_ang_vel + w_new))

    new = SimState(
        com_pos=pos_new,
        com_rpy=rpy_new,
        com_lin_vel=v_new,
        com_ang_vel=w_new,
        joint_pos=q_new,
        joint_vel=qd_new,
        foot_force=np.zeros((N_LEGS, 3)),
        time=state.time + dt,
    )
    _check_sane(new)
    new.foot_force = contact_forces(model, new, params)
    return new


def _check_sane(state: SimState) -> None:
    finite = (
        np.isfinite(state.com_pos).all()
        and np.isfinite(state.com_rpy).all()
        and np.isfinite(state.com_lin_vel).all()
        and np.isfinite(state.com_ang_vel).all()
        and np.isfinite(state.joint_pos).all()
        and np.isfinite(state.joint_vel).all()
    )
    if not finite:
        raise DivergedError(f"non-finite state at t = {state.time:.4f}")
    if np.abs(state.com_pos).max() > _POS_LIMIT:
        raise DivergedError(f"|com_pos| > {_POS_LIMIT} m at t = {state.time:.4f}")
    if max(np.abs(state.com_lin_vel).max(), np.abs(state.com_ang_vel).max()) > _VEL_LIMIT:
        raise DivergedError(f"|velocity| > {_VEL_LIMIT} at t = {state.time:.4f}")


def measured_contact(state: SimState, f_thresh: float) -> np.ndarray:
    """Per-leg contact flags: vertical foot force strictly above the threshold."""
    if f_thresh <= 0.0:
        raise ValueError(f"f_thresh must be positive, got {f_thresh}")
    return state.foot_force[:, 2] > f_thresh


def initial_state(
    model: RobotModel,
    params: ContactParams | None = None,
    com_pos=None,
    com_rpy=(0.0, 0.0, 0.0),
    joints=None,
) -> SimState:
    """Resting state in the default stance unless overridden.

    The default height puts the feet exactly on the ground plane, so the
    contact springs start unloaded; pass a lower com_pos to preload them.
    """
    if params is None:
        params = ContactParams()
    if com_pos is None:
        com_pos = (0.0, 0.0, model.stance_height() + params.ground_height)
    if joints is None:
        joints = model.default_stance_joints
    state = SimState(
        com_pos=np.array(com_pos, dtype=float),
        com_rpy=np.array(com_rpy, dtype=float),
        com_lin_vel=np.zeros(3),
        com_ang_vel=np.zeros(3),
        joint_pos=np.array(joints, dtype=float),
        joint_vel=np.zeros(12),
        foot_force=np.zeros((N_LEGS, 3)),
        time=0.0,
    )
    state.foot_force = contact_forces(model, state, params)
    return state


# ----------------------------------------------------------------- logging ---

_LOG_TAG = "quadmimic-simlog v1"

LOG_COLUMNS = (
    list(COLUMNS)
    + [f"q{i}" for i in range(12)]
    + [f"qd{i}" for i in range(12)]
    + [f"tau{i}" for i in range(12)]
    + [f"foot{i}_f{ax}" for i in range(4) for ax in "xyz"]
)


class TrajectoryLog:
    """Per-tick recorder whose leading columns are the motion CSV schema.

    to_motion() turns the state columns into a ReferenceMotion for replay
    or scoring; save() writes the full log (joint state, applied torques,
    contact forces appended after the motion columns).
    """

    def __init__(self, model: RobotModel, f_thresh: float = 10.0):
        self.model = model
        self.f_thresh = f_thresh
        self.rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, state: SimState, command: JointCommand | None = None) -> None:
        feet_w = foot_positions_world(self.model, state)
        # world -> robot frame: yaw-aligned axes centered on the CoM
        feet_r = (feet_w - state.com_pos) @ rot_z(state.com_rpy[2])
        contacts = measured_contact(state, self.f_thresh)
        if command is None:
            tau = np.zeros(12)
        else:
            tau = motor_torque(self.model, command, state.joint_pos, state.joint_vel)
        self.rows.append(
            np.concatenate(
                [
                    [state.time],
                    state.com_pos,
                    state.com_rpy,
                    state.com_lin_vel,
                    state.com_ang_vel,
                    feet_r.ravel(),
                    contacts.astype(float),
                    state.joint_pos,
                    state.joint_vel,
                    tau,
                    state.foot_force.ravel(),
                ]
            )
        )

    def to_motion(self) -> ReferenceMotion:
        """State columns as a non-cyclic ReferenceMotion; needs uniform spacing."""
        if len(self.rows) < 2:
            raise SchemaError(f"log has {len(self.rows)} rows, need >= 2 for a motion")
        arr = np.asarray(self.rows)
        dts = np.diff(arr[:, 0])
        dt = float(dts[0])
        if np.abs(dts - dt).max() > 1e-9:
            raise SchemaError("log rows not uniformly spaced in time")
        n = len(arr)
        return ReferenceMotion(
            dt=dt,
            com_pos=arr[:, 1:4],
            com_rpy=arr[:, 4:7],
            com_lin_vel=arr[:, 7:10],
            com_ang_vel=arr[:, 10:13],
            foot_pos=arr[:, 13:25].reshape(n, 4, 3),
            contact=arr[:, 25:29] > 0.5,
            cyclic=False,
        )

    def save(self, path) -> None:
        """Write the log CSV; floats via repr for lossless round trips."""
        lines = [f"# {_LOG_TAG}", ",".join(LOG_COLUMNS)]
        for row in self.rows:
            vals = [repr(float(v)) for v in row]
            vals[25:29] = [str(int(v)) for v in row[25:29]]
            lines.append(",".join(vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
