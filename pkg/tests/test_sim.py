"""Simulator tests: integrator accuracy, contact law, invariants, logging."""

import math

import numpy as np
import pytest

from quadmimic.errors import DivergedError, SchemaError
from quadmimic.geom import rot_zyx, skew
from quadmimic.motion import COLUMNS, save_motion, load_motion
from quadmimic.robot import default_model, leg_jacobian
from quadmimic.sim import (
    GRAVITY,
    JOINT_INERTIA,
    ContactParams,
    JointCommand,
    SimState,
    TrajectoryLog,
    contact_forces,
    foot_positions_world,
    initial_state,
    measured_contact,
    motor_torque,
    step,
)

MODEL = default_model()
PARAMS = ContactParams()


def hold_command(state, kp=20.0, kd=1.0, f_each=None):
    """Joint PD at the current pose plus optional per-leg vertical force feedforward."""
    tau = np.zeros(12)
    if f_each is not None:
        R = rot_zyx(state.com_rpy)
        for leg in range(4):
            W = R @ leg_jacobian(MODEL, leg, state.joint_pos[3 * leg : 3 * leg + 3])
            tau[3 * leg : 3 * leg + 3] = -W.T @ np.array([0.0, 0.0, f_each])
    return JointCommand(
        tau_ff=tau,
        q_target=state.joint_pos.copy(),
        qd_target=np.zeros(12),
        kp=np.full(12, kp),
        kd=np.full(12, kd),
    )


# ------------------------------------------------------------- integrator ---

def test_ballistic_drop_matches_projectile():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 2.0))
    cmd = JointCommand.zeros()
    for _ in range(500):
        s = step(s, cmd, MODEL, PARAMS)
    dz = s.com_pos[2] - 2.0
    assert abs(dz - (-0.5 * GRAVITY * 0.5**2)) < 1e-4
    assert abs(dz + 1.225) < 1e-9  # trapezoidal update is exact on parabolas
    assert abs(s.com_lin_vel[2] + GRAVITY * 0.5) < 1e-9


def test_ballistic_with_initial_velocity():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 2.0))
    s.com_lin_vel = np.array([1.0, 0.5, 2.0])
    cmd = JointCommand.zeros()
    for _ in range(400):
        s = step(s, cmd, MODEL, PARAMS)
    t = 0.4
    assert abs(s.com_pos[0] - 1.0 * t) < 1e-9
    assert abs(s.com_pos[1] - 0.5 * t) < 1e-9
    assert abs(s.com_pos[2] - (2.0 + 2.0 * t - 0.5 * GRAVITY * t * t)) < 1e-9
    assert np.all(s.foot_force == 0.0)


def test_torque_free_flight_keeps_angular_velocity():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 3.0))
    w0 = np.array([0.3, -0.2, 0.5])
    s.com_ang_vel = w0.copy()
    cmd = JointCommand.zeros()
    for _ in range(200):
        s = step(s, cmd, MODEL, PARAMS)
    assert np.array_equal(s.com_ang_vel, w0)
    assert np.abs(s.com_rpy).max() > 0.01  # orientation did integrate


def test_step_rejects_bad_dt():
    s = initial_state(MODEL, PARAMS)
    with pytest.raises(ValueError):
        step(s, JointCommand.zeros(), MODEL, PARAMS, dt=0.0)
    with pytest.raises(ValueError):
        step(s, JointCommand.zeros(), MODEL, PARAMS, dt=3e-3)


def test_body_update_matches_manual_formulas():
    # With a huge virtual rotor inertia the joints cannot move, so every
    # contacting foot applies f0 - D v_foot with the law linearized at the
    # pre-step state and v_foot taken at the new body velocity. The body
    # update must then match an independently assembled 6x6 solve.
    s = initial_state(MODEL, PARAMS, com_rpy=(0.05, -0.03, 0.4))
    feet_z = foot_positions_world(MODEL, s)[:, 2]
    s.com_pos[2] -= 0.004 + feet_z.min()  # deepest foot penetrates 4 mm
    s.com_lin_vel = np.array([0.1, 0.05, -0.2])
    s.com_ang_vel = np.array([0.2, -0.1, 0.3])
    s.foot_force = contact_forces(MODEL, s, PARAMS)

    dt = 1e-3
    R = rot_zyx(s.com_rpy)
    inertia_w = R @ MODEL.inertia_body @ R.T
    feet = foot_positions_world(MODEL, s)
    a = np.zeros((6, 6))
    a[:3, :3] = MODEL.mass * np.eye(3)
    a[3:, 3:] = inertia_w
    c = np.concatenate(
        [
            MODEL.mass * (s.com_lin_vel + dt * np.array([0.0, 0.0, -GRAVITY])),
            inertia_w @ s.com_ang_vel,
        ]
    )
    for leg in range(4):
        r = feet[leg] - s.com_pos
        pen = -feet[leg][2]
        if pen <= 0.0:
            continue
        v_foot = s.com_lin_vel + np.cross(s.com_ang_vel, r)
        fn = PARAMS.stiffness * pen - PARAMS.damping * v_foot[2]
        if fn <= 0.0:
            continue
        slip = math.hypot(v_foot[0], v_foot[1])
        ct = PARAMS.friction * fn / max(slip, PARAMS.breakaway_speed)
        d = np.diag([ct, ct, PARAMS.damping])
        p = np.vstack([np.eye(3), skew(r)])
        a += dt * p @ d @ p.T
        c += dt * p @ np.array([0.0, 0.0, PARAMS.stiffness * pen])
    u = np.linalg.solve(a, c)
    v_exp, w_exp = u[:3], u[3:]
    p_exp = s.com_pos + 0.5 * dt * (s.com_lin_vel + v_exp)

    out = step(s, JointCommand.zeros(), MODEL, PARAMS, dt=dt, joint_inertia=1e9)
    assert np.abs(out.com_lin_vel - v_exp).max() < 1e-9
    assert np.abs(out.com_pos - p_exp).max() < 1e-12
    assert np.abs(out.com_ang_vel - w_exp).max() < 1e-7
    assert np.abs(out.joint_vel).max() < 1e-9  # rotor inertia froze the joints


# ----------------------------------------------------------------- contact ---

def test_static_stance_supports_weight():
    s = initial_state(MODEL, PARAMS)
    cmd = hold_command(s, f_each=MODEL.mass * GRAVITY / 4)
    for _ in range(2000):
        s = step(s, cmd, MODEL, PARAMS)
    fz_sums = []
    for _ in range(300):
        s = step(s, cmd, MODEL, PARAMS)
        fz_sums.append(s.foot_force[:, 2].sum())
    weight = MODEL.mass * GRAVITY
    assert abs(np.mean(fz_sums) - weight) < 0.02 * weight
    # settles at the spring preload depth, roughly mg / (4 k)
    drop = MODEL.stance_height() - s.com_pos[2]
    assert abs(drop - weight / (4 * PARAMS.stiffness)) < 1e-3
    assert np.abs(s.com_lin_vel).max() < 1e-3
    assert np.abs(s.com_rpy[:2]).max() < 0.01
    assert np.abs(s.joint_pos - cmd.q_target).max() < 0.01


def test_sliding_friction_sits_on_cone_exactly():
    h = MODEL.stance_height()
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, h - 0.005))
    s.com_lin_vel = np.array([0.5, 0.0, 0.0])  # well above breakaway
    f = contact_forces(MODEL, s, PARAMS)
    for leg in range(4):
        fn = f[leg, 2]
        ft = math.hypot(f[leg, 0], f[leg, 1])
        assert fn == pytest.approx(PARAMS.stiffness * 0.005, rel=1e-12)
        assert ft == pytest.approx(PARAMS.friction * fn, rel=1e-12)
        assert f[leg, 0] < 0.0  # opposes the slip direction
    s2 = step(s, JointCommand.zeros(), MODEL, PARAMS)
    for leg in range(4):
        ft = math.hypot(s2.foot_force[leg, 0], s2.foot_force[leg, 1])
        assert ft <= PARAMS.friction * s2.foot_force[leg, 2] * (1 + 1e-12)


def test_slow_slip_is_viscous_below_breakaway():
    h = MODEL.stance_height()
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, h - 0.005))
    s.com_lin_vel = np.array([0.002, 0.0, 0.0])  # 20% of breakaway
    f = contact_forces(MODEL, s, PARAMS)
    fn = f[0, 2]
    ft = math.hypot(f[0, 0], f[0, 1])
    assert ft == pytest.approx(0.2 * PARAMS.friction * fn, rel=1e-9)


def test_contact_force_invariants_random_states():
    rng = np.random.default_rng(7)
    lo, hi = MODEL.joint_limits[:, 0], MODEL.joint_limits[:, 1]
    for _ in range(50):
        s = SimState(
            com_pos=np.array([0.0, 0.0, rng.uniform(0.05, 0.4)]),
            com_rpy=rng.uniform(-0.3, 0.3, 3),
            com_lin_vel=rng.uniform(-1, 1, 3),
            com_ang_vel=rng.uniform(-2, 2, 3),
            joint_pos=rng.uniform(lo, hi),
            joint_vel=rng.uniform(-5, 5, 12),
            foot_force=np.zeros((4, 3)),
        )
        f = contact_forces(MODEL, s, PARAMS)
        above = foot_positions_world(MODEL, s)[:, 2] >= PARAMS.ground_height
        assert np.all(f[:, 2] >= 0.0)
        assert np.all(f[above] == 0.0)
        for leg in range(4):
            ft = math.hypot(f[leg, 0], f[leg, 1])
            assert ft <= PARAMS.friction * f[leg, 2] * (1 + 1e-12)


def test_drop_settles_without_bouncing():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, MODEL.stance_height() + 0.005))
    cmd = hold_command(s, kp=100.0, kd=2.0, f_each=MODEL.mass * GRAVITY / 4)
    vz_tail = []
    for i in range(1500):
        s = step(s, cmd, MODEL, PARAMS)
        if i >= 1200:
            vz_tail.append(abs(s.com_lin_vel[2]))
    assert max(vz_tail) < 2e-3
    assert s.com_pos[2] > MODEL.stance_height() - 0.01


# ------------------------------------------------------------- measurement ---

def test_measured_contact_strict_threshold():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 1.0))
    assert not measured_contact(s, 10.0).any()
    s.foot_force = np.zeros((4, 3))
    s.foot_force[:, 2] = [10.0, 10.0 + 1e-9, 5.0, 30.0]
    assert list(measured_contact(s, 10.0)) == [False, True, False, True]
    with pytest.raises(ValueError):
        measured_contact(s, 0.0)


def test_resting_robot_all_feet_in_contact():
    # preload the springs at the static equilibrium depth: ~29 N per leg
    depth = MODEL.mass * GRAVITY / (4 * PARAMS.stiffness)
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, MODEL.stance_height() - depth))
    assert measured_contact(s, 10.0).all()
    assert s.foot_force[:, 2] == pytest.approx(np.full(4, 29.4), rel=1e-9)


def test_motor_torque_saturates_at_limits():
    s = initial_state(MODEL, PARAMS)
    cmd = JointCommand(
        tau_ff=np.zeros(12),
        q_target=s.joint_pos + 1.0,
        qd_target=np.zeros(12),
        kp=np.full(12, 1e6),
        kd=np.zeros(12),
    )
    tau = motor_torque(MODEL, cmd, s.joint_pos, s.joint_vel)
    assert np.array_equal(tau, MODEL.torque_limits)


def test_joint_pd_tracks_step_target_in_flight():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 5.0))
    target = s.joint_pos + 0.25
    cmd = JointCommand(
        tau_ff=np.zeros(12),
        q_target=target,
        qd_target=np.zeros(12),
        kp=np.full(12, 100.0),
        kd=np.full(12, 2.0),
    )
    for _ in range(300):
        s = step(s, cmd, MODEL, PARAMS)
    assert np.abs(s.joint_pos - target).max() < 0.01
    assert np.abs(s.joint_vel).max() < 0.1


# ------------------------------------------------------------- divergence ---

def test_diverged_on_position_blowup():
    s = initial_state(MODEL, PARAMS, com_pos=(150.0, 0.0, 1.0))
    with pytest.raises(DivergedError):
        step(s, JointCommand.zeros(), MODEL, PARAMS)


def test_diverged_on_velocity_blowup():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 1.0))
    s.com_lin_vel = np.array([150.0, 0.0, 0.0])
    with pytest.raises(DivergedError):
        step(s, JointCommand.zeros(), MODEL, PARAMS)


def test_diverged_on_nan_state():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 1.0))
    s.joint_pos[3] = math.nan
    with pytest.raises(DivergedError):
        step(s, JointCommand.zeros(), MODEL, PARAMS)


def test_diverged_near_gimbal_lock():
    s = initial_state(MODEL, PARAMS, com_pos=(0.0, 0.0, 1.0))
    s.com_rpy = np.array([0.0, math.pi / 2 - 1e-9, 0.0])
    with pytest.raises(DivergedError):
        step(s, JointCommand.zeros(), MODEL, PARAMS)


# ------------------------------------------------------------ determinism ---

def test_bit_identical_replay():
    def run():
        s = initial_state(MODEL, PARAMS)
        states = []
        for i in range(300):
            cmd = hold_command(s, f_each=MODEL.mass * GRAVITY / 4)
            cmd.q_target = cmd.q_target + 0.05 * math.sin(2 * math.pi * i / 100)
            s = step(s, cmd, MODEL, PARAMS)
            states.append(s)
        return states

    a, b = run(), run()
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.com_pos, sb.com_pos)
        assert np.array_equal(sa.com_rpy, sb.com_rpy)
        assert np.array_equal(sa.joint_pos, sb.joint_pos)
        assert np.array_equal(sa.joint_vel, sb.joint_vel)
        assert np.array_equal(sa.foot_force, sb.foot_force)


# ----------------------------------------------------------------- logging ---

def test_trajectory_log_roundtrip(tmp_path):
    log = TrajectoryLog(MODEL, f_thresh=10.0)
    s = initial_state(MODEL, PARAMS, com_pos=(0, 0, MODEL.stance_height() - 0.003))
    cmd = hold_command(s, f_each=MODEL.mass * GRAVITY / 4)
    for _ in range(50):
        log.append(s, cmd)
        s = step(s, cmd, MODEL, PARAMS)
    assert len(log) == 50

    path = tmp_path / "log.csv"
    log.save(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# quadmimic-simlog v1"
    header = lines[1].split(",")
    assert header[: len(COLUMNS)] == COLUMNS
    assert len(lines) == 52

    m = log.to_motion()
    assert m.n_frames == 50
    assert m.dt == pytest.approx(1e-3)
    assert not m.cyclic
    assert np.abs(m.com_pos[0] - np.array([0, 0, MODEL.stance_height() - 0.003])).max() < 1e-12
    assert m.contact.all()

    # robot-frame feet: undo the (identity-yaw) transform and compare world
    feet_w = m.foot_pos[0] + m.com_pos[0]
    s0 = initial_state(MODEL, PARAMS, com_pos=(0, 0, MODEL.stance_height() - 0.003))
    assert np.abs(feet_w - foot_positions_world(MODEL, s0)).max() < 1e-12

    out = tmp_path / "motion.csv"
    save_motion(m, out)
    m2 = load_motion(out)
    assert np.array_equal(m2.com_pos, m.com_pos)
    assert np.array_equal(m2.foot_pos, m.foot_pos)


def test_trajectory_log_rejects_nonuniform_times():
    log = TrajectoryLog(MODEL)
    s = initial_state(MODEL, PARAMS, com_pos=(0, 0, 1.0))
    log.append(s)
    s1 = s.copy()
    s1.time = 1e-3
    log.append(s1)
    s2 = s.copy()
    s2.time = 3.5e-3
    log.append(s2)
    with pytest.raises(SchemaError):
        log.to_motion()


def test_contact_params_validation():
    with pytest.raises(ValueError):
        ContactParams(stiffness=0.0)
    with pytest.raises(ValueError):
        ContactParams(damping=-1.0)
    with pytest.raises(ValueError):
        ContactParams(breakaway_speed=0.0)
