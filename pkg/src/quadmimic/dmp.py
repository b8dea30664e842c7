"""Rhythmic movement primitives for cyclic motion channels.

Each scalar channel is encoded by a second-order attractor driven by a
periodic forcing term: ydd = alpha_z * (beta_z * (g - y) - yd) + a * f(phi),
with the phase advancing at 2*pi/period and f a normalized mix of von
Mises kernels over phase. The kernel weights w capture the waveform
(style); the baseline g and amplitude a are the two knobs left open for
optimization. Channels with a secular trend (CoM x under forward
locomotion, yaw under turning) are fit on the linearly detrended signal
and the trend is restored on reconstruction, so one period of any steady
gait becomes an infinitely extensible reference.

Contact flags are not encoded; they are copied from the source schedule,
which keeps gait timing fixed under modulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SchemaError
from .motion import ReferenceMotion
from .robot import LEG_NAMES

N_BASIS = 100
ALPHA_Z = 25.0
BETA_Z = 6.25
# peak-to-peak below this is treated as a constant channel
DEGENERATE_PTP = 1e-9

CHANNEL_NAMES = (
    "com_x", "com_y", "com_z", "roll", "pitch", "yaw",
    "lin_vel_x", "lin_vel_y", "lin_vel_z",
    "ang_vel_x", "ang_vel_y", "ang_vel_z",
) + tuple(
    f"foot_{name.lower()}_{ax}" for name in LEG_NAMES for ax in "xyz"
)

_DMP_FORMAT = "quadmimic-dmpset v1"


def basis_width(n_basis: int) -> float:
    """Kernel sharpness so two adjacent kernels meet at 0.5 activation."""
    return math.log(2.0) / (1.0 - math.cos(math.pi / n_basis))


@dataclass(frozen=True)
class DmpParams:
    """One channel's primitive: style weights plus (g, a) modulation knobs."""

    w: np.ndarray            # (n_basis,) kernel weights
    g: float                 # baseline the attractor pulls toward
    a: float                 # forcing amplitude scale
    period: float            # s
    y0: float                # channel value at phase 0 (detrended)
    yd0: float               # channel rate at phase 0 (detrended)
    slope: float = 0.0       # secular trend removed before fitting, per s
    alpha_z: float = ALPHA_Z
    beta_z: float = BETA_Z
    h: float = field(default_factory=lambda: basis_width(N_BASIS))
    degenerate: bool = False
    fit_rmse: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if not self.h > 0:
            raise ValueError(f"basis width must be positive, got {self.h}")
        if abs(self.alpha_z - 4.0 * self.beta_z) > 1e-9:
            raise ValueError(
                f"attractor must be critically damped (alpha_z = 4*beta_z), "
                f"got {self.alpha_z}, {self.beta_z}"
            )
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    @property
    def n_basis(self) -> int:
        return len(self.w)

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.n_basis) * (2.0 * math.pi / self.n_basis)


def forcing(params: DmpParams, phases) -> np.ndarray:
    """Normalized kernel mix a*f(phi), vectorized over phases."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    if params.degenerate or params.n_basis == 0:
        return np.zeros(len(phases))
    psi = np.exp(params.h * (np.cos(phases[:, None] - params.centers) - 1.0))
    return params.a * (psi @ params.w) / np.maximum(psi.sum(axis=1), 1e-300)


def fit(
    trajectory,
    dt: float,
    period: float,
    n_basis: int = N_BASIS,
    alpha_z: float = ALPHA_Z,
    beta_z: float = BETA_Z,
) -> DmpParams:
    """Fit one channel from at least one period of uniform samples.

    The forcing target is inverted through the same semi-implicit update
    the rollout integrates, on the cyclic (detrended) extension, so an
    exact forcing fit reproduces the demonstration exactly at the native
    sample grid. Kernel weights solve a ridge-regularized least squares
    against that target. g anchors at the channel mean and a starts at 1,
    with the waveform folded into w. A flat channel fits as a pure
    attractor (w = 0) and is flagged.
    """
    y = np.asarray(trajectory, dtype=float)
    if not dt > 0 or not period > 0:
        raise ValueError(f"dt and period must be positive, got {dt}, {period}")
    n_per = int(round(period / dt))
    if n_per < 4:
        raise ValueError(f"period {period} too short for dt {dt}")
    if len(y) < n_per + 1:
        raise ValueError(
            f"need {n_per + 1} samples to cover one period, got {len(y)}"
        )
    y = y[: n_per + 1]

    slope = (y[-1] - y[0]) / period
    t = np.arange(n_per + 1) * dt
    z = y - slope * t
    zc = z[:n_per]  # unique phases; z[n_per] repeats phase 0

    if np.ptp(zc) < DEGENERATE_PTP:
        g = float(zc.mean())
        return DmpParams(
            w=np.zeros(n_basis), g=g, a=1.0, period=period,
            y0=g, yd0=0.0, slope=float(slope),
            alpha_z=alpha_z, beta_z=beta_z, h=basis_width(n_basis),
            degenerate=True, fit_rmse=0.0,
        )

    # velocities implied by the rollout's update rule, on the cyclic extension:
    # y[k+1] = y[k] + dt*yd[k+1]  =>  yd[k] = (z[k] - z[k-1]) / dt
    zd = (zc - np.roll(zc, 1)) / dt
    zd_next = np.roll(zd, -1)
    g = float(zc.mean())
    f_target = (zd_next - zd) / dt - alpha_z * (beta_z * (g - zc) - zd)

    phases = np.arange(n_per) * (2.0 * math.pi / n_per)
    h = basis_width(n_basis)
    centers = np.arange(n_basis) * (2.0 * math.pi / n_basis)
    psi = np.exp(h * (np.cos(phases[:, None] - centers) - 1.0))
    design = psi / psi.sum(axis=1, keepdims=True)
    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += 1e-10  # ridge for conditioning
    w = np.linalg.solve(gram, design.T @ f_target)

    params = DmpParams(
        w=w, g=g, a=1.0, period=period,
        y0=float(zc[0]), yd0=float(zd[0]), slope=float(slope),
        alpha_z=alpha_z, beta_z=beta_z, h=h,
    )
    recon = rollout(params, period, dt)
    rmse = float(np.sqrt(np.mean((recon[:n_per] - zc) ** 2)))
    return replace(params, fit_rmse=rmse)


def rollout(
    params: DmpParams,
    duration: float,
    dt: float,
    y0: float | None = None,
    yd0: float | None = None,
) -> np.ndarray:
    """Integrate the primitive for duration seconds; samples at 0..duration.

    Pure attractor dynamics in the detrended channel space; any secular
    slope is the caller's to restore. Semi-implicit Euler at the sample
    step keeps the scheme deterministic and stable for the critically
    damped gains used here.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = int(round(duration / dt))
    y = np.zeros(n + 1)
    y[0] = params.y0 if y0 is None else y0
    yd = params.yd0 if yd0 is None else yd0
    phases = np.arange(n) * (2.0 * math.pi * dt / params.period)
    force = forcing(params, phases)
    a_z, b_z, g = params.alpha_z, params.beta_z, params.g
    for k in range(n):
        yd += dt * (a_z * (b_z * (g - y[k]) - yd) + force[k])
        y[k + 1] = y[k] + dt * yd
    return y


def modulate(params: DmpParams, new_g: float, new_a: float) -> DmpParams:
    """Copy with the baseline and amplitude replaced; style weights frozen.

    The dynamics are linear, so the periodic orbit maps affinely under a
    (g, a) change: it shifts with g and scales about g with a. The stored
    integration start is carried onto the new orbit the same way; leaving
    it on the old orbit would inject a startup transient into every
    modulated rollout, which the closed loop then has to survive.
    """
    new_g, new_a = float(new_g), float(new_a)
    if new_g == params.g and new_a == params.a:
        return params
    scale = new_a / params.a if params.a != 0.0 else 0.0
    return replace(
        params,
        g=new_g,
        a=new_a,
        y0=new_g + scale * (params.y0 - params.g),
        yd0=scale * params.yd0,
    )


@dataclass
class DmpSet:
    """All 24 channels of one motion plus its contact schedule."""

    channels: dict[str, DmpParams]
    period: float
    contact: np.ndarray     # (n, 4) source schedule covering one period
    contact_dt: float

    def __post_init__(self):
        missing = [n for n in CHANNEL_NAMES if n not in self.channels]
        if missing:
            raise SchemaError(f"missing channels: {missing}")
        for name, p in self.channels.items():
            if abs(p.period - self.period) > 1e-12:
                raise SchemaError(
                    f"channel {name} period {p.period} != shared {self.period}"
                )
        self.contact = np.asarray(self.contact, dtype=bool)
        if self.contact.ndim != 2 or self.contact.shape[1] != 4:
            raise SchemaError(f"contact shape {self.contact.shape}, expected (n, 4)")


def _motion_channels(motion: ReferenceMotion) -> np.ndarray:
    """(n_frames, 24) channel matrix in CHANNEL_NAMES order."""
    return np.hstack([
        motion.com_pos,
        motion.com_rpy,
        motion.com_lin_vel,
        motion.com_ang_vel,
        motion.foot_pos.reshape(len(motion.com_pos), 12),
    ])


def motion_to_dmps(motion: ReferenceMotion, n_basis: int = N_BASIS) -> DmpSet:
    """Fit all 24 channels of a cyclic motion over its period."""
    if not motion.cyclic:
        raise SchemaError("DMP fitting needs a cyclic motion with a known period")
    period = motion.duration
    data = _motion_channels(motion)
    channels = {
        name: fit(data[:, i], motion.dt, period, n_basis)
        for i, name in enumerate(CHANNEL_NAMES)
    }
    return DmpSet(
        channels=channels,
        period=period,
        contact=motion.contact.copy(),
        contact_dt=motion.dt,
    )


def dmps_to_motion(
    dmps: DmpSet, duration: float | None = None, dt: float | None = None
) -> ReferenceMotion:
    """Reconstruct a ReferenceMotion by rolling out every channel.

    Velocities come from their own channels, not from differentiating the
    position rollouts, mirroring how the channels were fit. The result is
    marked cyclic when the duration is a whole number of periods.
    """
    if duration is None:
        duration = dmps.period
    if dt is None:
        dt = dmps.contact_dt
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError(f"duration {duration} too short for dt {dt}")
    t = np.arange(n + 1) * dt
    tracks = np.zeros((n + 1, len(CHANNEL_NAMES)))
    for i, name in enumerate(CHANNEL_NAMES):
        p = dmps.channels[name]
        tracks[:, i] = rollout(p, duration, dt) + p.slope * t

    src_n = len(dmps.contact)
    idx = np.round((t % dmps.period) / dmps.contact_dt).astype(int)
    contact = dmps.contact[np.minimum(idx, src_n - 1)]

    cycles = duration / dmps.period
    return ReferenceMotion(
        dt=dt,
        com_pos=tracks[:, 0:3],
        com_rpy=tracks[:, 3:6],
        com_lin_vel=tracks[:, 6:9],
        com_ang_vel=tracks[:, 9:12],
        foot_pos=tracks[:, 12:24].reshape(n + 1, 4, 3),
        contact=contact,
        cyclic=abs(cycles - round(cycles)) < 1e-9,
    )


def consistency_check(dmps: DmpSet, dt: float | None = None) -> dict[str, float]:
    """RMS gap between velocity channels and differentiated position channels.

    The two encodings are fit independently; this reports how well they
    agree over one period, per velocity channel.
    """
    if dt is None:
        dt = dmps.contact_dt
    motion = dmps_to_motion(dmps, dmps.period, dt)
    pos = np.hstack([motion.com_pos, motion.com_rpy])
    vel = np.hstack([motion.com_lin_vel, motion.com_ang_vel])
    deriv = np.gradient(pos, dt, axis=0)
    names = CHANNEL_NAMES[6:12]
    return {
        name: float(np.sqrt(np.mean((deriv[:, i] - vel[:, i]) ** 2)))
        for i, name in enumerate(names)
    }


def save_dmps(dmps: DmpSet, path) -> None:
    """Versioned JSON parameter file; floats survive reload bit-identically."""
    doc = {
        "format": _DMP_FORMAT,
        "period": dmps.period,
        "contact_dt": dmps.contact_dt,
        "contact": dmps.contact.astype(int).tolist(),
        "channels": {
            name: {
                "w": p.w.tolist(),
                "g": p.g,
                "a": p.a,
                "y0": p.y0,
                "yd0": p.yd0,
                "slope": p.slope,
                "alpha_z": p.alpha_z,
                "beta_z": p.beta_z,
                "h": p.h,
                "degenerate": p.degenerate,
                "fit_rmse": p.fit_rmse,
            }
            for name, p in dmps.channels.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_dmps(path) -> DmpSet:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != _DMP_FORMAT:
        raise SchemaError(f"not a {_DMP_FORMAT} file: {doc.get('format')!r}")
    channels = {
        name: DmpParams(
            w=np.array(c["w"], dtype=float),
            g=c["g"], a=c["a"], period=doc["period"],
            y0=c["y0"], yd0=c["yd0"], slope=c["slope"],
            alpha_z=c["alpha_z"], beta_z=c["beta_z"], h=c["h"],
            degenerate=c["degenerate"], fit_rmse=c["fit_rmse"],
        )
        for name, c in doc["channels"].items()
    }
    return DmpSet(
        channels=channels,
        period=doc["period"],
        contact=np.array(doc["contact"], dtype=bool),
        contact_dt=doc["contact_dt"],
    )
