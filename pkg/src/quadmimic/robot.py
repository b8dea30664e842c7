"""Rigid quadruped model: description file, analytic leg kinematics, frames.

Leg layout and conventions (fixed package-wide):

* legs are indexed FR=0, FL=1, RR=2, RL=3;
* each leg is abduction (roll about body x at the hip point), then a lateral
  offset to the thigh pivot (+y on left legs, -y on right legs), then hip and
  knee pitch joints about the local y axis;
* at zero joints the foot sits at hip + (0, +-abduction_offset, -(thigh+calf));
* the knee uses the bent-backward branch, knee angle <= 0 in normal use;
* body frame origin is the CoM; "robot frame" means the yaw-aligned frame
  centered at the CoM (world z up, x along body heading).

The model itself is data: everything numeric comes from a description file
(see data/a1_like.yaml for the shipped default and the key schema).
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import SchemaError, UnitError
from .geom import rot_zyx

LEG_NAMES = ("FR", "FL", "RR", "RL")
N_LEGS = 4
# Lateral sign of the abduction offset per leg: -1 right side, +1 left side.
LEG_Y_SIGN = (-1.0, 1.0, -1.0, 1.0)

# Fraction of full extension the planar clamp allows; keeps IK away from the
# straight-knee singularity while staying within float roundtrip tolerance.
_REACH_FRACTION = 0.995


@dataclass(frozen=True)
class LegJoints:
    abduction: float
    hip: float
    knee: float

    def as_array(self) -> np.ndarray:
        return np.array([self.abduction, self.hip, self.knee])


@dataclass(frozen=True)
class RobotModel:
    mass: float
    inertia_body: np.ndarray        # (3,3) about CoM, body frame
    hip_offsets: np.ndarray         # (4,3) body frame, from CoM
    hip_abduction_offset: float     # m, lateral thigh-pivot offset
    thigh: float                    # m
    calf: float                     # m
    joint_limits: np.ndarray        # (12,2) rad, rows (leg*3 + joint)
    torque_limits: np.ndarray       # (12,) N*m
    default_stance_joints: np.ndarray  # (12,) rad

    def leg_slice(self, leg: int) -> slice:
        return slice(3 * leg, 3 * leg + 3)

    def max_leg_reach(self) -> float:
        """Radius of the sphere about a hip that bounds the foot."""
        return self.hip_abduction_offset + self.thigh + self.calf

    def stance_height(self) -> float:
        """Foot depth below the hip in the default stance pose."""
        q = self.default_stance_joints[:3]
        p = forward_kinematics(self, 0, q)
        return float(-(p[2] - self.hip_offsets[0, 2]))


# Description file schema: key -> (sanity_min, sanity_max).
_SCALAR_KEYS = {
    "mass_kg": (0.5, 500.0),
    "inertia_xx_kgm2": (1e-5, 50.0),
    "inertia_yy_kgm2": (1e-5, 50.0),
    "inertia_zz_kgm2": (1e-5, 50.0),
    "inertia_xy_kgm2": (-10.0, 10.0),
    "inertia_xz_kgm2": (-10.0, 10.0),
    "inertia_yz_kgm2": (-10.0, 10.0),
    "link_abduction_offset_m": (0.005, 0.5),
    "link_thigh_m": (0.02, 1.0),
    "link_calf_m": (0.02, 1.0),
    "limit_abduction_min_rad": (-math.pi, math.pi),
    "limit_abduction_max_rad": (-math.pi, math.pi),
    "limit_hip_min_rad": (-math.pi, math.pi),
    "limit_hip_max_rad": (-math.pi, math.pi),
    "limit_knee_min_rad": (-math.pi, math.pi),
    "limit_knee_max_rad": (-math.pi, math.pi),
    "torque_limit_abduction_nm": (0.1, 1000.0),
    "torque_limit_hip_nm": (0.1, 1000.0),
    "torque_limit_knee_nm": (0.1, 1000.0),
    "stance_abduction_rad": (-math.pi, math.pi),
    "stance_hip_rad": (-math.pi, math.pi),
    "stance_knee_rad": (-math.pi, math.pi),
}
_HIP_KEYS = {
    f"hip_{leg}_{axis}_m": (-1.0, 1.0)
    for leg in ("fr", "fl", "rr", "rl")
    for axis in ("x", "y", "z")
}
_SCHEMA_TAG = "quadmimic-robot-v1"


def load_robot(path) -> RobotModel:
    """Load and validate a robot description file (YAML, flat keys)."""
    with open(path, "r") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: expected a flat mapping")
    if raw.get("schema") != _SCHEMA_TAG:
        raise SchemaError(f"{path}: schema tag {raw.get('schema')!r}, expected {_SCHEMA_TAG!r}")

    expected = set(_SCALAR_KEYS) | set(_HIP_KEYS) | {"schema"}
    missing = expected - set(raw)
    unknown = set(raw) - expected
    if missing or unknown:
        raise SchemaError(f"{path}: missing keys {sorted(missing)}, unknown keys {sorted(unknown)}")

    vals = {}
    for key, (lo, hi) in {**_SCALAR_KEYS, **_HIP_KEYS}.items():
        v = raw[key]
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise UnitError(f"{path}: {key} = {v!r} is not a finite number")
        if not lo <= v <= hi:
            raise UnitError(f"{path}: {key} = {v} outside sanity range [{lo}, {hi}]")
        vals[key] = float(v)

    inertia = np.array(
        [
            [vals["inertia_xx_kgm2"], vals["inertia_xy_kgm2"], vals["inertia_xz_kgm2"]],
            [vals["inertia_xy_kgm2"], vals["inertia_yy_kgm2"], vals["inertia_yz_kgm2"]],
            [vals["inertia_xz_kgm2"], vals["inertia_yz_kgm2"], vals["inertia_zz_kgm2"]],
        ]
    )
    hips = np.array(
        [
            [vals[f"hip_{leg}_{ax}_m"] for ax in ("x", "y", "z")]
            for leg in ("fr", "fl", "rr", "rl")
        ]
    )
    limits = np.array(
        [
            [vals["limit_abduction_min_rad"], vals["limit_abduction_max_rad"]],
            [vals["limit_hip_min_rad"], vals["limit_hip_max_rad"]],
            [vals["limit_knee_min_rad"], vals["limit_knee_max_rad"]],
        ]
    )
    torques = np.array(
        [vals["torque_limit_abduction_nm"], vals["torque_limit_hip_nm"], vals["torque_limit_knee_nm"]]
    )
    stance = np.array(
        [vals["stance_abduction_rad"], vals["stance_hip_rad"], vals["stance_knee_rad"]]
    )

    model = RobotModel(
        mass=vals["mass_kg"],
        inertia_body=inertia,
        hip_offsets=hips,
        hip_abduction_offset=vals["link_abduction_offset_m"],
        thigh=vals["link_thigh_m"],
        calf=vals["link_calf_m"],
        joint_limits=np.tile(limits, (4, 1)),
        torque_limits=np.tile(torques, 4),
        default_stance_joints=np.tile(stance, 4),
    )
    _validate_model(model, str(path))
    return model


def default_model() -> RobotModel:
    """The shipped A1-class description."""
    ref = importlib.resources.files("quadmimic.data").joinpath("a1_like.yaml")
    with importlib.resources.as_file(ref) as path:
        return load_robot(path)


def _validate_model(m: RobotModel, origin: str) -> None:
    if m.mass <= 0:
        raise UnitError(f"{origin}: mass must be positive")
    eig = np.linalg.eigvalsh(m.inertia_body)
    if eig.min() <= 0:
        raise UnitError(f"{origin}: inertia matrix not positive definite (eigs {eig})")
    if min(m.hip_abduction_offset, m.thigh, m.calf) <= 0:
        raise UnitError(f"{origin}: link lengths must be positive")
    lo, hi = m.joint_limits[:, 0], m.joint_limits[:, 1]
    if np.any(lo >= hi):
        raise UnitError(f"{origin}: joint limit min >= max")
    # Front/rear and left/right sign symmetry of the hip rectangle.
    x, y = m.hip_offsets[:, 0], m.hip_offsets[:, 1]
    sx = np.sign(x)
    sy = np.sign(y)
    if not (sx[0] == sx[1] == 1 and sx[2] == sx[3] == -1):
        raise UnitError(f"{origin}: hip x signs must be front +, rear - (got {x})")
    if not (sy[0] == sy[2] == -1 and sy[1] == sy[3] == 1):
        raise UnitError(f"{origin}: hip y signs must be right -, left + (got {y})")
    if not (np.allclose(abs(x), abs(x[0])) and np.allclose(abs(y), abs(y[0]))):
        raise UnitError(f"{origin}: hip offsets must be mirror symmetric (got {m.hip_offsets})")


def _joints3(joints) -> tuple[float, float, float]:
    if isinstance(joints, LegJoints):
        return joints.abduction, joints.hip, joints.knee
    a = joints
    return float(a[0]), float(a[1]), float(a[2])


def _fk_core(d, lt, lc, q1, q2, q3):
    """Foot position relative to the hip point. Returns floats (x, y, z)."""
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(q2), math.cos(q2)
    s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
    ux = -lt * s2 - lc * s23
    uz = -lt * c2 - lc * c23
    return ux, c1 * d - s1 * uz, s1 * d + c1 * uz


def forward_kinematics(model: RobotModel, leg: int, joints) -> np.ndarray:
    """Body-frame foot position for one leg.

    joints: (abduction, hip, knee) in radians, LegJoints or 3-sequence.
    """
    q1, q2, q3 = _joints3(joints)
    d = model.hip_abduction_offset * LEG_Y_SIGN[leg]
    x, y, z = _fk_core(d, model.thigh, model.calf, q1, q2, q3)
    hip = model.hip_offsets[leg]
    return np.array([hip[0] + x, hip[1] + y, hip[2] + z])


def leg_jacobian(model: RobotModel, leg: int, joints) -> np.ndarray:
    """d(foot_body)/d(joints), 3x3, columns (abduction, hip, knee)."""
    q1, q2, q3 = _joints3(joints)
    d = model.hip_abduction_offset * LEG_Y_SIGN[leg]
    lt, lc = model.thigh, model.calf
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(q2), math.cos(q2)
    s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
    ux = -lt * s2 - lc * s23
    uz = -lt * c2 - lc * c23
    dux2 = -lt * c2 - lc * c23
    duz2 = lt * s2 + lc * s23
    dux3 = -lc * c23
    duz3 = lc * s23
    return np.array(
        [
            [0.0, dux2, dux3],
            [-s1 * d - c1 * uz, -s1 * duz2, -s1 * duz3],
            [c1 * d - s1 * uz, c1 * duz2, c1 * duz3],
        ]
    )


def foot_positions(model: RobotModel, joints12) -> np.ndarray:
    """(4,3) body-frame foot positions from a 12-vector of joint angles."""
    q = np.asarray(joints12, dtype=float)
    return np.array(
        [forward_kinematics(model, leg, q[3 * leg : 3 * leg + 3]) for leg in range(N_LEGS)]
    )


def inverse_kinematics(model: RobotModel, leg: int, target) -> tuple[LegJoints, bool]:
    """Analytic IK for one leg, body-frame target.

    Returns (joints, out_of_reach). Unreachable targets are clamped inside
    the workspace (lateral feasibility first, then the planar two-link radius
    to _REACH_FRACTION of full extension) and flagged; the returned joints
    solve the clamped target exactly.
    """
    d = model.hip_abduction_offset * LEG_Y_SIGN[leg]
    lt, lc = model.thigh, model.calf
    hip = model.hip_offsets[leg]
    t = np.asarray(target, dtype=float)
    rx = t[0] - hip[0]
    ry = t[1] - hip[1]
    rz = t[2] - hip[2]
    clamped = False

    # Abduction: rotate about x so the lateral coordinate equals d. Needs
    # hypot(ry, rz) >= |d|; inflate the lateral radius when it is not.
    rho = math.hypot(ry, rz)
    if rho < abs(d):
        clamped = True
        if rho < 1e-12:
            ry, rz = d, 0.0
        else:
            scale = abs(d) / rho
            ry *= scale
            rz *= scale
        rho = abs(d)
    q1 = math.atan2(rz, ry) + math.acos(max(-1.0, min(1.0, d / rho)))
    q1 = math.atan2(math.sin(q1), math.cos(q1))

    # Planar two-link problem in the abducted frame; y' is d by construction.
    s1, c1 = math.sin(q1), math.cos(q1)
    px = rx
    pz = -s1 * ry + c1 * rz
    reach = math.hypot(px, pz)
    r_max = _REACH_FRACTION * (lt + lc)
    r_min = max(abs(lt - lc), 0.02 * (lt + lc))
    if reach > r_max or reach < r_min:
        clamped = True
        if reach < 1e-12:
            px, pz = 0.0, -r_min
        else:
            scale = min(max(reach, r_min), r_max) / reach
            px *= scale
            pz *= scale
        reach = math.hypot(px, pz)

    cos_knee = (reach * reach - lt * lt - lc * lc) / (2.0 * lt * lc)
    q3 = -math.acos(max(-1.0, min(1.0, cos_knee)))
    q2 = math.atan2(-px, -pz) - math.atan2(lc * math.sin(q3), lt + lc * math.cos(q3))
    q2 = math.atan2(math.sin(q2), math.cos(q2))
    return LegJoints(q1, q2, q3), clamped


def body_to_world(com_pos, rpy, p_body) -> np.ndarray:
    """Map a body-frame point to world given CoM position and orientation."""
    return np.asarray(com_pos, dtype=float) + rot_zyx(rpy) @ np.asarray(p_body, dtype=float)


def world_to_body(com_pos, rpy, p_world) -> np.ndarray:
    """Inverse of body_to_world."""
    return rot_zyx(rpy).T @ (np.asarray(p_world, dtype=float) - np.asarray(com_pos, dtype=float))
