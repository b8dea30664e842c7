"""DMP tests: fit quality, attractor behavior, modulation, serialization."""

import math

import numpy as np
import pytest

from quadmimic.dmp import (
    CHANNEL_NAMES,
    DmpParams,
    DmpSet,
    basis_width,
    consistency_check,
    dmps_to_motion,
    fit,
    forcing,
    load_dmps,
    modulate,
    motion_to_dmps,
    rollout,
    save_dmps,
)
from quadmimic.errors import SchemaError
from quadmimic.motion import GaitSpec, ReferenceMotion, synthesize_gait
from quadmimic.robot import default_model, foot_positions

MODEL = default_model()

GAIT_SPECS = {
    "trot": GaitSpec(speed=0.3),
    "pace": GaitSpec(speed=0.3),
    "turn": GaitSpec(yaw_rate=0.5),
    "side-step": GaitSpec(speed=0.15),
}


def channel_matrix(motion):
    return np.hstack([
        motion.com_pos,
        motion.com_rpy,
        motion.com_lin_vel,
        motion.com_ang_vel,
        motion.foot_pos.reshape(len(motion.com_pos), 12),
    ])


def stand_motion(n=101, dt=0.005):
    feet = foot_positions(MODEL, MODEL.default_stance_joints)
    h = MODEL.stance_height()
    return ReferenceMotion(
        dt=dt,
        com_pos=np.tile([0.0, 0.0, h], (n, 1)),
        com_rpy=np.zeros((n, 3)),
        com_lin_vel=np.zeros((n, 3)),
        com_ang_vel=np.zeros((n, 3)),
        foot_pos=np.tile(feet, (n, 1, 1)),
        contact=np.ones((n, 4), dtype=bool),
        cyclic=True,
    )


# ------------------------------------------------------------ primitives ---


def test_adjacent_kernels_meet_at_half_activation():
    n = 100
    h = basis_width(n)
    # halfway between two neighboring centers both kernels read 0.5
    half_gap = math.pi / n
    assert math.exp(h * (math.cos(half_gap) - 1.0)) == pytest.approx(0.5, abs=1e-12)


def test_constant_channel_fits_degenerate():
    y = np.full(101, 0.37)
    p = fit(y, 0.005, 0.5)
    assert p.degenerate
    assert np.array_equal(p.w, np.zeros(100))
    assert p.g == pytest.approx(0.37)
    track = rollout(p, 0.5, 0.005)
    assert track == pytest.approx(np.full(101, 0.37), abs=1e-12)


def test_sine_reconstruction():
    period, dt = 0.5, 0.0025
    t = np.arange(201) * dt
    y = np.sin(2.0 * math.pi * t / period)
    p = fit(y, dt, period)
    track = rollout(p, period, dt)
    rmse = math.sqrt(float(np.mean((track - y) ** 2)))
    assert rmse < 0.05
    assert p.fit_rmse < 0.05


def test_rollout_is_periodic_after_fit():
    period, dt = 0.5, 0.005
    t = np.arange(101) * dt
    y = 0.1 * np.sin(2.0 * math.pi * t / period) + 0.02 * np.cos(4.0 * math.pi * t / period)
    p = fit(y, dt, period)
    track = rollout(p, 3 * period, dt)
    n = 100
    second, third = track[n : 2 * n], track[2 * n : 3 * n]
    assert np.sqrt(np.mean((third - second) ** 2)) < 0.01 * np.ptp(y)


def test_zero_weights_converge_to_g():
    p = DmpParams(
        w=np.zeros(100), g=0.25, a=1.0, period=0.5, y0=1.0, yd0=0.0
    )
    track = rollout(p, 1.0, 0.001)
    assert abs(track[-1] - 0.25) < 1e-3 * abs(1.0 - 0.25)
    # critically damped: later error is a small fraction of earlier error
    assert abs(track[800] - 0.25) < 0.01 * abs(track[200] - 0.25)


def test_forcing_is_exactly_linear_in_amplitude():
    rng = np.random.default_rng(5)
    p = DmpParams(
        w=rng.normal(0.0, 10.0, 100), g=0.0, a=1.0, period=0.5, y0=0.0, yd0=0.0
    )
    phases = rng.uniform(0.0, 2.0 * math.pi, 64)
    doubled = modulate(p, p.g, 2.0)
    assert np.array_equal(forcing(doubled, phases), 2.0 * forcing(p, phases))


def test_zero_amplitude_settles_at_g():
    rng = np.random.default_rng(6)
    p = DmpParams(
        w=rng.normal(0.0, 50.0, 100), g=-0.1, a=1.0, period=0.5, y0=-0.3, yd0=0.5
    )
    quiet = modulate(p, p.g, 0.0)
    track = rollout(quiet, 2.0, 0.001)
    assert abs(track[-1] - quiet.g) < 1e-6


def test_modulate_identity_and_frozen_style():
    motion = synthesize_gait("trot", GAIT_SPECS["trot"], 0.005)
    p = motion_to_dmps(motion).channels["foot_fr_z"]
    same = modulate(p, p.g, p.a)
    assert np.array_equal(same.w, p.w)
    assert same.g == p.g and same.a == p.a and same.period == p.period
    other = modulate(p, p.g + 0.05, 2.0)
    assert np.array_equal(other.w, p.w)  # style untouched
    assert other.period == p.period


def test_g_shift_moves_mean_after_transients():
    motion = synthesize_gait("trot", GAIT_SPECS["trot"], 0.005)
    dmps = motion_to_dmps(motion)
    p = dmps.channels["foot_fr_z"]
    dmps.channels["foot_fr_z"] = modulate(p, p.g + 0.02, 1.0)
    shifted = dmps_to_motion(dmps, duration=3 * dmps.period)
    base = dmps_to_motion(motion_to_dmps(motion), duration=3 * dmps.period)
    n = round(dmps.period / dmps.contact_dt)
    dz = shifted.foot_pos[2 * n :, 0, 2] - base.foot_pos[2 * n :, 0, 2]
    assert dz.mean() == pytest.approx(0.02, abs=1e-3)


def test_amplitude_scales_swing_bump():
    motion = synthesize_gait("trot", GaitSpec(speed=0.3, clearance=0.08), 0.005)
    dmps = motion_to_dmps(motion)
    base = np.ptp(dmps_to_motion(dmps).foot_pos[:, 0, 2])
    p = dmps.channels["foot_fr_z"]
    dmps.channels["foot_fr_z"] = modulate(p, p.g, 1.5)
    scaled = np.ptp(dmps_to_motion(dmps).foot_pos[:, 0, 2])
    assert scaled / base == pytest.approx(1.5, rel=0.1)


# ----------------------------------------------------------- motion level ---


@pytest.mark.parametrize("gait", sorted(GAIT_SPECS))
def test_roundtrip_rmse_under_5_percent(gait):
    motion = synthesize_gait(gait, GAIT_SPECS[gait], 0.005)
    recon = dmps_to_motion(motion_to_dmps(motion))
    src = channel_matrix(motion)
    rec = channel_matrix(recon)
    assert recon.dt == motion.dt and len(rec) == len(src)
    for i, name in enumerate(CHANNEL_NAMES):
        ptp = np.ptp(src[:, i])
        if ptp < 1e-9:
            assert np.abs(rec[:, i] - src[:, i]).max() < 1e-9, name
        else:
            rmse = np.sqrt(np.mean((rec[:, i] - src[:, i]) ** 2))
            assert rmse < 0.05 * ptp, f"{name}: {100 * rmse / ptp:.2f}% of ptp"


def test_standing_motion_reconstructs_exactly():
    motion = stand_motion()
    dmps = motion_to_dmps(motion)
    assert all(p.degenerate for p in dmps.channels.values())
    recon = dmps_to_motion(dmps)
    assert np.allclose(channel_matrix(recon), channel_matrix(motion), atol=1e-12)
    assert np.array_equal(recon.contact, motion.contact)


def test_contact_schedule_copied_verbatim():
    motion = synthesize_gait("pace", GAIT_SPECS["pace"], 0.005)
    recon = dmps_to_motion(motion_to_dmps(motion))
    assert np.array_equal(recon.contact, motion.contact)


def test_velocity_channels_agree_with_position_derivative():
    for gait, spec in GAIT_SPECS.items():
        dmps = motion_to_dmps(synthesize_gait(gait, spec, 0.005))
        gaps = consistency_check(dmps)
        assert max(gaps.values()) < 0.01, (gait, gaps)


def test_multi_period_reconstruction_cyclic_flag():
    dmps = motion_to_dmps(synthesize_gait("trot", GAIT_SPECS["trot"], 0.005))
    two = dmps_to_motion(dmps, duration=2 * dmps.period)
    assert two.cyclic
    assert two.duration == pytest.approx(2 * dmps.period)
    partial = dmps_to_motion(dmps, duration=1.3 * dmps.period)
    assert not partial.cyclic


def test_secular_trend_restored():
    motion = synthesize_gait("trot", GAIT_SPECS["trot"], 0.005)
    dmps = motion_to_dmps(motion)
    three = dmps_to_motion(dmps, duration=3 * dmps.period)
    # forward progress continues across periods at the gait's speed
    expect = motion.com_pos[-1, 0] - motion.com_pos[0, 0]
    got = three.com_pos[-1, 0] - three.com_pos[0, 0]
    assert got == pytest.approx(3 * expect, rel=1e-6)


# ---------------------------------------------------------- serialization ---


def test_fit_is_deterministic():
    motion = synthesize_gait("trot", GAIT_SPECS["trot"], 0.005)
    a = motion_to_dmps(motion)
    b = motion_to_dmps(motion)
    for name in CHANNEL_NAMES:
        assert np.array_equal(a.channels[name].w, b.channels[name].w)
        assert a.channels[name].g == b.channels[name].g


def test_params_file_roundtrip_bit_identical(tmp_path):
    dmps = motion_to_dmps(synthesize_gait("pace", GAIT_SPECS["pace"], 0.005))
    path = tmp_path / "pace.dmp.json"
    save_dmps(dmps, path)
    back = load_dmps(path)
    assert back.period == dmps.period
    assert back.contact_dt == dmps.contact_dt
    assert np.array_equal(back.contact, dmps.contact)
    for name in CHANNEL_NAMES:
        p, q = dmps.channels[name], back.channels[name]
        assert np.array_equal(p.w, q.w)
        assert (p.g, p.a, p.y0, p.yd0, p.slope, p.h) == (q.g, q.a, q.y0, q.yd0, q.slope, q.h)
        assert p.degenerate == q.degenerate


def test_load_rejects_other_files(tmp_path):
    path = tmp_path / "nope.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(SchemaError):
        load_dmps(path)


# ------------------------------------------------------------- validation ---


def test_fit_requires_full_period():
    with pytest.raises(ValueError):
        fit(np.zeros(50), 0.005, 0.5)  # needs 101 samples


def test_fitting_needs_cyclic_motion():
    motion = synthesize_gait("trot", GAIT_SPECS["trot"], 0.005)
    acyclic = ReferenceMotion(
        dt=motion.dt,
        com_pos=motion.com_pos,
        com_rpy=motion.com_rpy,
        com_lin_vel=motion.com_lin_vel,
        com_ang_vel=motion.com_ang_vel,
        foot_pos=motion.foot_pos,
        contact=motion.contact,
        cyclic=False,
    )
    with pytest.raises(SchemaError):
        motion_to_dmps(acyclic)


def test_params_validation():
    w = np.zeros(10)
    with pytest.raises(ValueError):
        DmpParams(w=w, g=0.0, a=1.0, period=0.0, y0=0.0, yd0=0.0)
    with pytest.raises(ValueError):
        DmpParams(w=w, g=0.0, a=1.0, period=0.5, y0=0.0, yd0=0.0, h=-1.0)
    with pytest.raises(ValueError):
        DmpParams(
            w=w, g=0.0, a=1.0, period=0.5, y0=0.0, yd0=0.0,
            alpha_z=25.0, beta_z=5.0,
        )


def test_dmpset_validation():
    motion = synthesize_gait("trot", GAIT_SPECS["trot"], 0.005)
    dmps = motion_to_dmps(motion)
    partial = dict(dmps.channels)
    del partial["yaw"]
    with pytest.raises(SchemaError):
        DmpSet(partial, dmps.period, dmps.contact, dmps.contact_dt)
