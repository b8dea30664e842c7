"""Reference motions: container, CSV format, sampling, gait synthesis.

A ReferenceMotion stores uniformly sampled frames. World-frame fields: CoM
position, ZYX Euler orientation, linear and angular velocity. Robot-frame
fields (yaw-aligned frame centered at the CoM): the four foot positions.
Contacts are per-leg booleans.

Cyclic motions store exactly one period of frames (frame 0 .. frame N, with
N*dt = period). Gaits that displace the body are still cyclic in the robot
frame; their net world motion per period is captured by a rigid transform
(yaw increment plus translation) derived from frame 0 and frame N. sample()
wraps time modulo the period and unrolls that transform, so sampling is
continuous across the wrap point and multi-period playback of a forward gait
keeps advancing. For motions with zero net displacement the transform is the
identity and wrap is a plain modulo.

CSV layout (see also docs/formats.md):

    # quadmimic-motion v1
    # dt=<float> cyclic=<0|1> period=<float|none>
    t,com_x,...,com_wz,foot0_x,...,foot3_z,contact0..contact3
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PastEnd, SchemaError, SpecError, UnitError
from .geom import rot_z, wrap_angle
from .robot import LEG_Y_SIGN, N_LEGS, RobotModel, default_model

_FORMAT_TAG = "quadmimic-motion v1"

COLUMNS = (
    ["t"]
    + ["com_x", "com_y", "com_z", "com_roll", "com_pitch", "com_yaw"]
    + ["com_vx", "com_vy", "com_vz", "com_wx", "com_wy", "com_wz"]
    + [f"foot{i}_{ax}" for i in range(4) for ax in "xyz"]
    + [f"contact{i}" for i in range(4)]
)

GAIT_NAMES = ("trot", "pace", "turn", "side-step")

# Leg phase offsets, order FR, FL, RR, RL.
_OFFSETS = {
    "trot": (0.0, 0.5, 0.5, 0.0),       # diagonal pairs
    "pace": (0.0, 0.5, 0.0, 0.5),       # lateral pairs
    "turn": (0.0, 0.5, 0.5, 0.0),
    "side-step": (0.0, 0.5, 0.5, 0.0),
}


@dataclass(frozen=True)
class ReferenceFrame:
    com_pos: np.ndarray      # (3,) world
    com_rpy: np.ndarray      # (3,) roll, pitch, yaw
    com_lin_vel: np.ndarray  # (3,) world
    com_ang_vel: np.ndarray  # (3,) world
    foot_pos: np.ndarray     # (4,3) robot frame
    contact: np.ndarray      # (4,) bool


@dataclass
class ReferenceMotion:
    dt: float
    com_pos: np.ndarray
    com_rpy: np.ndarray
    com_lin_vel: np.ndarray
    com_ang_vel: np.ndarray
    foot_pos: np.ndarray
    contact: np.ndarray
    cyclic: bool = False
    _wrap: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.com_pos = np.asarray(self.com_pos, dtype=float)
        self.com_rpy = np.asarray(self.com_rpy, dtype=float)
        self.com_lin_vel = np.asarray(self.com_lin_vel, dtype=float)
        self.com_ang_vel = np.asarray(self.com_ang_vel, dtype=float)
        self.foot_pos = np.asarray(self.foot_pos, dtype=float)
        self.contact = np.asarray(self.contact, dtype=bool)
        n = len(self.com_pos)
        if n < 2:
            raise SchemaError(f"motion needs >= 2 frames, got {n}")
        if not self.dt > 0:
            raise SchemaError(f"dt must be positive, got {self.dt}")
        shapes = {
            "com_pos": (n, 3),
            "com_rpy": (n, 3),
            "com_lin_vel": (n, 3),
            "com_ang_vel": (n, 3),
            "foot_pos": (n, 4, 3),
            "contact": (n, 4),
        }
        for name, want in shapes.items():
            got = getattr(self, name).shape
            if got != want:
                raise SchemaError(f"{name} shape {got}, expected {want}")

    @property
    def n_frames(self) -> int:
        return len(self.com_pos)

    @property
    def duration(self) -> float:
        return self.dt * (self.n_frames - 1)

    @property
    def period(self) -> float | None:
        return self.duration if self.cyclic else None

    def frame(self, i: int) -> ReferenceFrame:
        return ReferenceFrame(
            self.com_pos[i],
            self.com_rpy[i],
            self.com_lin_vel[i],
            self.com_ang_vel[i],
            self.foot_pos[i],
            self.contact[i],
        )

    def wrap_transform(self) -> tuple[float, np.ndarray]:
        """Per-period rigid world transform (yaw increment, translation)."""
        dyaw = float(wrap_angle(self.com_rpy[-1, 2] - self.com_rpy[0, 2]))
        dpos = self.com_pos[-1] - rot_z(dyaw) @ self.com_pos[0]
        return dyaw, dpos


def sample(motion: ReferenceMotion, t: float) -> ReferenceFrame:
    """Interpolated frame at time t.

    Linear interpolation for positions and velocities, angle-wrapped for
    rpy, nearest frame for contact flags. Cyclic motions wrap t modulo the
    period with the per-period world transform unrolled; non-cyclic motions
    raise PastEnd outside [0, duration].
    """
    dur = motion.duration
    k = 0
    if motion.cyclic:
        if t < 0.0:
            raise PastEnd(f"t = {t} before motion start")
        k = int(t // dur)
        t = t - k * dur
        if t >= dur:  # float fuzz at an exact multiple
            k += 1
            t = 0.0
    elif t < -1e-12 or t > dur + 1e-9:
        raise PastEnd(f"t = {t} outside non-cyclic motion span [0, {dur}]")

    x = min(max(t, 0.0), dur) / motion.dt
    i0 = min(int(x), motion.n_frames - 2)
    a = x - i0
    i1 = i0 + 1

    pos = (1 - a) * motion.com_pos[i0] + a * motion.com_pos[i1]
    rpy = motion.com_rpy[i0] + a * wrap_angle(motion.com_rpy[i1] - motion.com_rpy[i0])
    lin = (1 - a) * motion.com_lin_vel[i0] + a * motion.com_lin_vel[i1]
    ang = (1 - a) * motion.com_ang_vel[i0] + a * motion.com_ang_vel[i1]
    foot = (1 - a) * motion.foot_pos[i0] + a * motion.foot_pos[i1]
    near = i0 if a < 0.5 else i1
    contact = motion.contact[near].copy()

    if k > 0:
        if motion._wrap is None:
            dyaw, dpos = motion.wrap_transform()
            motion._wrap = (dyaw, dpos, rot_z(dyaw))
        dyaw, dpos, Rz = motion._wrap
        for _ in range(k):
            pos = Rz @ pos + dpos
            lin = Rz @ lin
            ang = Rz @ ang
        rpy = np.array([rpy[0], rpy[1], rpy[2] + k * dyaw])

    return ReferenceFrame(pos, rpy, lin, ang, foot, contact)


# -------------------------------------------------------------------- CSV ---

def save_motion(motion: ReferenceMotion, path) -> None:
    """Write the versioned CSV form. Floats via repr: lossless round trip."""
    n = motion.n_frames
    per = repr(motion.duration) if motion.cyclic else "none"
    lines = [
        f"# {_FORMAT_TAG}",
        f"# dt={motion.dt!r} cyclic={int(motion.cyclic)} period={per}",
        ",".join(COLUMNS),
    ]
    for i in range(n):
        row = [repr(i * motion.dt)]
        row += [repr(float(v)) for v in motion.com_pos[i]]
        row += [repr(float(v)) for v in motion.com_rpy[i]]
        row += [repr(float(v)) for v in motion.com_lin_vel[i]]
        row += [repr(float(v)) for v in motion.com_ang_vel[i]]
        row += [repr(float(v)) for v in motion.foot_pos[i].ravel()]
        row += [str(int(v)) for v in motion.contact[i]]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_motion(path) -> ReferenceMotion:
    """Parse and validate the CSV form."""
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 5:
        raise SchemaError(f"{path}: too short to be a motion file")
    if lines[0].strip() != f"# {_FORMAT_TAG}":
        raise SchemaError(f"{path}: bad format tag {lines[0]!r}")

    meta = {}
    for tok in lines[1].lstrip("# ").split():
        k, _, v = tok.partition("=")
        meta[k] = v
    try:
        dt = float(meta["dt"])
        cyclic = bool(int(meta["cyclic"]))
    except (KeyError, ValueError) as e:
        raise SchemaError(f"{path}: bad metadata line {lines[1]!r}") from e

    if lines[2] != ",".join(COLUMNS):
        raise SchemaError(f"{path}: header row does not match canonical columns")

    rows = [ln for ln in lines[3:] if ln.strip()]
    n = len(rows)
    t = np.empty(n)
    data = np.empty((n, 24))
    contact = np.empty((n, 4), dtype=bool)
    for i, ln in enumerate(rows):
        parts = ln.split(",")
        if len(parts) != len(COLUMNS):
            raise SchemaError(f"{path}: row {i} has {len(parts)} fields, expected {len(COLUMNS)}")
        for j, s in enumerate(parts[:25]):
            try:
                v = float(s)
            except ValueError as e:
                raise UnitError(f"{path}: row {i}, column {COLUMNS[j]}: {s!r} not a number") from e
            if not math.isfinite(v):
                raise UnitError(f"{path}: row {i}, column {COLUMNS[j]}: non-finite value")
            if j == 0:
                t[i] = v
            else:
                data[i, j - 1] = v
        for j, s in enumerate(parts[25:]):
            if s not in ("0", "1"):
                raise SchemaError(f"{path}: row {i}, column {COLUMNS[25 + j]}: contact must be 0/1")
            contact[i, j] = s == "1"

    if np.any(np.diff(t) <= 0):
        raise SchemaError(f"{path}: frame times not strictly increasing")

    return ReferenceMotion(
        dt=dt,
        com_pos=data[:, 0:3],
        com_rpy=data[:, 3:6],
        com_lin_vel=data[:, 6:9],
        com_ang_vel=data[:, 9:12],
        foot_pos=data[:, 12:24].reshape(n, 4, 3),
        contact=contact,
        cyclic=cyclic,
    )


# -------------------------------------------------------------- synthesis ---

@dataclass(frozen=True)
class GaitSpec:
    speed: float = 0.0          # m/s along +x (side-step: along +y)
    yaw_rate: float = 0.0       # rad/s, turn only
    stance_height: float = 0.28
    duty_factor: float = 0.6
    frequency: float = 2.0      # strides per second
    clearance: float = 0.08     # swing apex above ground


_RANGES = {
    "speed": (-1.0, 1.0),
    "yaw_rate": (-2.0, 2.0),
    "stance_height": (0.15, 0.35),
    "duty_factor": (0.35, 0.8),
    "frequency": (0.5, 4.0),
    "clearance": (0.005, 0.12),
}


def _check_spec(spec: GaitSpec):
    for name, (lo, hi) in _RANGES.items():
        v = getattr(spec, name)
        if not (math.isfinite(v) and lo <= v <= hi):
            raise SpecError(f"{name} = {v} outside supported range [{lo}, {hi}]")


def _smooth_step(s):
    # 0 -> 1 with zero slope at both ends; keeps touchdown/liftoff gentle
    return s - math.sin(2.0 * math.pi * s) / (2.0 * math.pi)


def synthesize_gait(
    gait: str,
    spec: GaitSpec,
    dt: float,
    model: RobotModel | None = None,
) -> ReferenceMotion:
    """One period of a synthetic gait, cyclic, passing validate().

    trot steps diagonal pairs, pace lateral pairs; turn yaws in place; the
    side-step trots sideways. Swing feet follow a smoothed horizontal path
    with a half-sine vertical clearance profile.
    """
    gait = gait.replace("_", "-").lower()
    if gait not in GAIT_NAMES:
        raise SpecError(f"unknown gait {gait!r}, supported: {GAIT_NAMES}")
    _check_spec(spec)
    if gait == "turn" and spec.speed != 0.0:
        raise SpecError("turn gait is yaw only; set speed = 0")
    if gait != "turn" and spec.yaw_rate != 0.0:
        raise SpecError(f"{gait} does not take a yaw_rate")
    if model is None:
        model = default_model()

    steps = max(int(round(1.0 / (spec.frequency * dt))), 4)
    period = steps * dt  # effective period snaps to the frame grid
    duty = spec.duty_factor
    offsets = _OFFSETS[gait]

    neutral = np.array(
        [
            [
                model.hip_offsets[leg, 0],
                model.hip_offsets[leg, 1] + LEG_Y_SIGN[leg] * model.hip_abduction_offset,
                -spec.stance_height,
            ]
            for leg in range(N_LEGS)
        ]
    )

    if gait == "side-step":
        direction = np.array([0.0, 1.0, 0.0])
    else:
        direction = np.array([1.0, 0.0, 0.0])
    stride = spec.speed * duty * period
    yaw_stride = spec.yaw_rate * duty * period

    # Pace supports on one lateral pair at a time, so the CoM must shift
    # weight over the support side; a flat CoM path leaves roll control
    # to friction alone and is not trackable at moderate speeds. The sway
    # is zero-mean and periodic, crossing zero mid double-support.
    sway_amp = 0.0
    sway_phase = 0.0
    if gait == "pace":
        half_track = abs(model.hip_offsets[0, 1]) + model.hip_abduction_offset
        sway_amp = 0.3 * half_track
        sway_phase = 0.5 * (duty - 0.5)

    n = steps + 1
    com_pos = np.zeros((n, 3))
    com_rpy = np.zeros((n, 3))
    com_lin = np.zeros((n, 3))
    com_ang = np.zeros((n, 3))
    foot = np.zeros((n, 4, 3))
    contact = np.zeros((n, 4), dtype=bool)

    for i in range(n):
        t = i * dt
        com_pos[i] = direction * spec.speed * t
        com_pos[i, 2] = spec.stance_height
        com_rpy[i, 2] = spec.yaw_rate * t
        com_lin[i] = direction * spec.speed
        com_ang[i, 2] = spec.yaw_rate
        for leg in range(N_LEGS):
            s = math.fmod(t / period + offsets[leg], 1.0)
            if s < duty:
                w = s / duty
                u = 0.5 - w
                z = 0.0
                contact[i, leg] = True
            else:
                sg = (s - duty) / (1.0 - duty)
                u = -0.5 + _smooth_step(sg)
                z = spec.clearance * math.sin(math.pi * sg)
            if gait == "turn":
                p = rot_z(yaw_stride * u) @ neutral[leg]
            else:
                p = neutral[leg] + direction * (stride * u)
            foot[i, leg] = p
            foot[i, leg, 2] = -spec.stance_height + z
        if sway_amp:
            ph = 2.0 * math.pi * (t / period - sway_phase)
            com_pos[i, 1] -= sway_amp * math.sin(ph)
            com_lin[i, 1] = -sway_amp * (2.0 * math.pi / period) * math.cos(ph)
            # feet are in the yaw-aligned CoM frame; the world-fixed track
            # lines counter-sway here
            foot[i, :, 1] += sway_amp * math.sin(ph)

    return ReferenceMotion(
        dt=dt,
        com_pos=com_pos,
        com_rpy=com_rpy,
        com_lin_vel=com_lin,
        com_ang_vel=com_ang,
        foot_pos=foot,
        contact=contact,
        cyclic=True,
    )


# ------------------------------------------------------------- validation ---

@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    frame: int
    leg: int | None
    detail: str


def validate(motion: ReferenceMotion, model: RobotModel | None = None) -> list[ValidationIssue]:
    """Physical-consistency report. Never mutates; empty list means clean.

    Checks: contact feet near ground height, swing feet not below ground,
    feet inside the leg workspace shell, velocities consistent with
    positional finite differences (10% with a small absolute floor).
    """
    if model is None:
        model = default_model()
    issues: list[ValidationIssue] = []
    n = motion.n_frames
    height_tol = 0.03
    reach = model.max_leg_reach()

    for i in range(n):
        com_z = motion.com_pos[i, 2]
        for leg in range(N_LEGS):
            fz_world = com_z + motion.foot_pos[i, leg, 2]
            if motion.contact[i, leg] and abs(fz_world) > height_tol:
                issues.append(
                    ValidationIssue(
                        "contact_height", i, leg,
                        f"contact foot at world z = {fz_world:.4f}",
                    )
                )
            if not motion.contact[i, leg] and fz_world < -height_tol:
                issues.append(
                    ValidationIssue(
                        "swing_below_ground", i, leg,
                        f"swing foot at world z = {fz_world:.4f}",
                    )
                )
            r = np.linalg.norm(motion.foot_pos[i, leg] - model.hip_offsets[leg])
            if r > reach + 1e-9:
                issues.append(
                    ValidationIssue("workspace", i, leg, f"foot {r:.4f} m from hip, reach {reach:.4f}")
                )

    # velocity consistency on interior frames, central differences
    for i in range(1, n - 1):
        fd = (motion.com_pos[i + 1] - motion.com_pos[i - 1]) / (2 * motion.dt)
        v = motion.com_lin_vel[i]
        err = np.linalg.norm(fd - v)
        if err > 0.1 * max(float(np.linalg.norm(v)), 0.1):
            issues.append(
                ValidationIssue("velocity_mismatch", i, None, f"|fd - v| = {err:.4f}")
            )
        fd_yaw = float(wrap_angle(motion.com_rpy[i + 1, 2] - motion.com_rpy[i - 1, 2])) / (2 * motion.dt)
        wz = motion.com_ang_vel[i, 2]
        if abs(fd_yaw - wz) > 0.1 * max(abs(wz), 0.1):
            issues.append(
                ValidationIssue("yaw_rate_mismatch", i, None, f"|fd - wz| = {abs(fd_yaw - wz):.4f}")
            )
    return issues
