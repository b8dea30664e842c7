"""Gradient-free trajectory optimization and motion stitching.

The optimizer is a from-scratch (mu/mu_w, lambda) CMA-ES with rank-one and
rank-mu covariance updates and cumulative step-size adaptation. It is the
engine behind two workflows:

* optimize_swing_z: retune the swing-height baseline (g) and amplitude (a)
  of the four foot-z channels of a fitted DmpSet, eight numbers total, so
  the closed-loop imitation reward of the reconstructed motion improves
  while every other parameter stays frozen and the style weights are
  untouched.
* optimize_stitched: the same decision variables for every segment of a
  stitched sequence at once, warm-started from the per-segment optima.

stitch() concatenates reference motions by rigidly aligning each segment's
starting CoM pose (yaw plus horizontal translation) with the previous
segment's final pose, so the CoM path stays continuous at the seams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .control import ControllerConfig
from .dmp import DmpSet, dmps_to_motion, modulate
from .errors import IncompatibleMotions
from .geom import rot_z
from .motion import ReferenceMotion
from .reward import RewardWeights, evaluate_episode
from .robot import RobotModel
from .sim import ContactParams


@dataclass(frozen=True)
class CmaConfig:
    """Budget and sampling parameters for one CMA-ES run."""

    dimension: int
    population: int = 16
    sigma0: float = 0.3
    iterations: int = 200
    seed: int = 0
    bounds: np.ndarray | None = None  # (dimension, 2) low/high, or None
    x0: np.ndarray | None = None      # initial mean; default: bounds center or 0
    scales: np.ndarray | None = None  # per-coordinate sigma multipliers, default 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension {self.dimension} < 1")
        if self.population < 4:
            raise ValueError(f"population {self.population} < 4")
        if not self.sigma0 > 0.0:
            raise ValueError(f"sigma0 {self.sigma0} must be positive")
        if self.iterations < 1:
            raise ValueError(f"iterations {self.iterations} < 1")
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            if b.shape != (self.dimension, 2):
                raise ValueError(f"bounds shape {b.shape}, expected ({self.dimension}, 2)")
            if np.any(b[:, 0] >= b[:, 1]):
                raise ValueError("each bounds row needs low < high")
            object.__setattr__(self, "bounds", b)
        if self.x0 is not None:
            x = np.asarray(self.x0, dtype=float)
            if x.shape != (self.dimension,):
                raise ValueError(f"x0 shape {x.shape}, expected ({self.dimension},)")
            object.__setattr__(self, "x0", x)
        if self.scales is not None:
            s = np.asarray(self.scales, dtype=float)
            if s.shape != (self.dimension,):
                raise ValueError(f"scales shape {s.shape}, expected ({self.dimension},)")
            if np.any(s <= 0):
                raise ValueError("scales must be positive")
            object.__setattr__(self, "scales", s)


@dataclass
class CmaResult:
    best_x: np.ndarray
    best_f: float
    history: np.ndarray        # (iterations,) best-so-far, non-increasing
    mean_history: np.ndarray   # (iterations,) population mean fitness
    sigma_history: np.ndarray  # (iterations,) step size
    n_evaluations: int


def _initial_mean(config: CmaConfig) -> np.ndarray:
    if config.x0 is not None:
        return config.x0.copy()
    if config.bounds is not None:
        return config.bounds.mean(axis=1)
    return np.zeros(config.dimension)


def cma_es(objective: Callable[[np.ndarray], float], config: CmaConfig) -> CmaResult:
    """Minimize objective over a box with (mu/mu_w, lambda) CMA-ES.

    Out-of-bounds samples are redrawn up to 100 times, then clamped, so
    the objective only ever sees feasible points. Runs are deterministic
    per seed. A population of identical fitness keeps the updates finite
    (stable sort, constant learning rates), it just stops making progress.
    """
    n = config.dimension
    lam = config.population
    mu = lam // 2
    raw = math.log((lam + 1) / 2) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mu_eff = 1.0 / float(weights @ weights)

    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    rng = np.random.default_rng(config.seed)
    mean = _initial_mean(config)
    sigma = config.sigma0
    # anisotropic start: coordinates with tight useful ranges get small
    # initial variance instead of wasting the early population on them
    cov = np.eye(n) if config.scales is None else np.diag(config.scales**2)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)

    lo = hi = None
    if config.bounds is not None:
        lo, hi = config.bounds[:, 0], config.bounds[:, 1]

    best_x = mean.copy()
    best_f = math.inf
    history = np.empty(config.iterations)
    mean_history = np.empty(config.iterations)
    sigma_history = np.empty(config.iterations)
    n_evaluations = 0

    for it in range(config.iterations):
        cov = (cov + cov.T) / 2
        vals, basis = np.linalg.eigh(cov)
        scale = np.sqrt(np.maximum(vals, 1e-20))
        transform = basis * scale                 # maps N(0, I) to N(0, C)
        inv_sqrt = (basis / scale) @ basis.T      # C^(-1/2)

        xs = np.empty((lam, n))
        for k in range(lam):
            for _ in range(100):
                x = mean + sigma * (transform @ rng.standard_normal(n))
                if lo is None or np.all((x >= lo) & (x <= hi)):
                    break
            else:
                x = np.clip(x, lo, hi)
            xs[k] = x
        fs = np.array([float(objective(x)) for x in xs])
        n_evaluations += lam

        order = np.argsort(fs, kind="stable")
        if fs[order[0]] < best_f:
            best_f = float(fs[order[0]])
            best_x = xs[order[0]].copy()

        # displacement of the selected candidates in sigma-normalized space
        ys = (xs[order[:mu]] - mean) / sigma
        y_w = weights @ ys
        mean = mean + sigma * y_w

        p_sigma = (1 - c_sigma) * p_sigma + math.sqrt(
            c_sigma * (2 - c_sigma) * mu_eff
        ) * (inv_sqrt @ y_w)
        correction = math.sqrt(1 - (1 - c_sigma) ** (2 * (it + 1)))
        h_sigma = float(
            np.linalg.norm(p_sigma) / correction < (1.4 + 2 / (n + 1)) * chi_n
        )
        p_c = (1 - c_c) * p_c + h_sigma * math.sqrt(c_c * (2 - c_c) * mu_eff) * y_w

        rank_mu = (ys * weights[:, None]).T @ ys
        delta_h = (1 - h_sigma) * c_c * (2 - c_c)
        cov = (
            (1 - c_1 - c_mu) * cov
            + c_1 * (np.outer(p_c, p_c) + delta_h * cov)
            + c_mu * rank_mu
        )
        sigma *= math.exp(
            (c_sigma / d_sigma) * (np.linalg.norm(p_sigma) / chi_n - 1)
        )

        history[it] = best_f
        mean_history[it] = fs.mean()
        sigma_history[it] = sigma

    return CmaResult(best_x, best_f, history, mean_history, sigma_history, n_evaluations)


# ---------------------------------------------------------------------------
# Swing-height optimization: 8-D (g, a) over the four foot-z channels.

FOOT_Z_CHANNELS = ("foot_fr_z", "foot_fl_z", "foot_rr_z", "foot_rl_z")
AMPLITUDE_BOUNDS = (0.25, 4.0)
BASELINE_HALF_RANGE = 0.1  # g may move +-10 cm from the fitted value

_UNIT_BOX_8 = np.array([[0.0, 1.0]] * 8)

# Initial sampling anisotropy for the (g, a) pairs. Useful g corrections are
# millimeters (a baseline far off the fitted one leaves stance references
# hovering above or dug below the ground, which the gait planner cannot
# serve), while amplitude must range over the whole [0.25, 4] window, so the
# g coordinates start with 1/20 the step of the amplitude coordinates.
_SWING_SCALES = np.array([0.05, 1.0] * 4)


def _fit_anchors(dmps: DmpSet) -> np.ndarray:
    """(4, 2) fitted (g, a) of the foot-z channels: the identity modulation."""
    return np.array(
        [[dmps.channels[c].g, dmps.channels[c].a] for c in FOOT_Z_CHANNELS]
    )


def decision_to_params(dmps: DmpSet, u: np.ndarray) -> np.ndarray:
    """Map a unit-box decision vector to physical (g, a) rows, one per leg.

    CMA-ES works in [0, 1]^8 so the 20 cm baseline window and the 3.75-wide
    amplitude window share one step size; this is the inverse of
    params_to_decision.
    """
    u = np.asarray(u, dtype=float).reshape(4, 2)
    anchors = _fit_anchors(dmps)
    lo_a, hi_a = AMPLITUDE_BOUNDS
    params = np.empty((4, 2))
    params[:, 0] = anchors[:, 0] - BASELINE_HALF_RANGE + u[:, 0] * (2 * BASELINE_HALF_RANGE)
    params[:, 1] = lo_a + u[:, 1] * (hi_a - lo_a)
    return params


def params_to_decision(dmps: DmpSet, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float).reshape(4, 2)
    anchors = _fit_anchors(dmps)
    lo_a, hi_a = AMPLITUDE_BOUNDS
    u = np.empty((4, 2))
    u[:, 0] = (params[:, 0] - anchors[:, 0] + BASELINE_HALF_RANGE) / (2 * BASELINE_HALF_RANGE)
    u[:, 1] = (params[:, 1] - lo_a) / (hi_a - lo_a)
    return np.clip(u, 0.0, 1.0).ravel()


def apply_swing_params(dmps: DmpSet, params: np.ndarray) -> DmpSet:
    """Copy of dmps with the foot-z (g, a) replaced; style weights frozen."""
    params = np.asarray(params, dtype=float).reshape(4, 2)
    channels = dict(dmps.channels)
    for name, (g, a) in zip(FOOT_Z_CHANNELS, params):
        channels[name] = modulate(channels[name], g, a)
    return DmpSet(channels, dmps.period, dmps.contact.copy(), dmps.contact_dt)


@dataclass
class SwingZResult:
    dmps: DmpSet               # modulated set at the optimum
    motion: ReferenceMotion    # one-period reconstruction of the optimum
    params: np.ndarray         # (4, 2) optimized (g, a)
    baseline_reward: float     # fitness of the unmodified fit
    best_reward: float
    history: np.ndarray        # (iterations + 1,) best-so-far reward, [0] = baseline
    mean_history: np.ndarray
    sigma_history: np.ndarray
    n_evaluations: int


def _episode_objective(
    build_motion: Callable[[np.ndarray], ReferenceMotion],
    controller_config: ControllerConfig,
    model: RobotModel | None,
    sim_params: ContactParams | None,
    duration: float | None,
    weights: RewardWeights | None,
    seed: int,
) -> Callable[[np.ndarray], float]:
    def objective(u: np.ndarray) -> float:
        try:
            motion = build_motion(u)
            result = evaluate_episode(
                motion,
                controller_config,
                model=model,
                params=sim_params,
                duration=duration,
                seed=seed,
                weights=weights,
            )
        except Exception:
            return math.inf  # any episode failure counts as worst fitness
        return -result.total

    return objective


def optimize_swing_z(
    dmps: DmpSet,
    controller_config: ControllerConfig | None = None,
    cma_config: CmaConfig | None = None,
    model: RobotModel | None = None,
    sim_params: ContactParams | None = None,
    eval_duration: float | None = None,
    weights: RewardWeights | None = None,
) -> SwingZResult:
    """Retune foot-z baseline and amplitude to maximize imitation reward.

    The decision vector is (g, a) per leg for the four foot-z channels;
    basis weights, the other twenty channels, period, and contact schedule
    never change. The unmodified fit is evaluated first so the reported
    history starts at the plain controller's reward and the result can
    only improve on it. Episodes default to two periods, long enough for
    a degraded swing to show up as tracking loss or a stumble.
    """
    controller_config = controller_config or ControllerConfig()
    if eval_duration is None:
        eval_duration = 2.0 * dmps.period

    u0 = params_to_decision(dmps, _fit_anchors(dmps))
    base = cma_config or CmaConfig(dimension=8)
    config = replace(
        base, dimension=8, bounds=_UNIT_BOX_8, x0=u0, scales=_SWING_SCALES
    )

    objective = _episode_objective(
        lambda u: dmps_to_motion(apply_swing_params(dmps, decision_to_params(dmps, u))),
        controller_config, model, sim_params, eval_duration, weights, base.seed,
    )

    baseline_f = objective(u0)
    result = cma_es(objective, config)

    if result.best_f < baseline_f:
        best_u, best_f = result.best_x, result.best_f
    else:
        best_u, best_f = u0, baseline_f
    history = -np.minimum.accumulate(np.concatenate([[baseline_f], result.history]))

    best_params = decision_to_params(dmps, best_u)
    best_set = apply_swing_params(dmps, best_params)
    return SwingZResult(
        dmps=best_set,
        motion=dmps_to_motion(best_set),
        params=best_params,
        baseline_reward=-baseline_f,
        best_reward=-best_f,
        history=history,
        mean_history=-result.mean_history,
        sigma_history=result.sigma_history,
        n_evaluations=result.n_evaluations + 1,
    )


# ---------------------------------------------------------------------------
# Stitching.

def stitch(motions: Sequence[ReferenceMotion]) -> ReferenceMotion:
    """Concatenate motions, aligning each start pose to the previous end.

    Alignment is the rigid transform the reward frame is invariant to:
    a yaw rotation plus a horizontal translation that carries segment
    k+1's initial CoM pose onto segment k's final one. Heights and
    roll/pitch are kept as authored. Robot-frame foot positions and
    contact flags pass through untouched; the duplicate seam frame is
    dropped. A single motion comes back unchanged.
    """
    motions = list(motions)
    if not motions:
        raise ValueError("stitch needs at least one motion")
    first = motions[0]
    for m in motions[1:]:
        if abs(m.dt - first.dt) > 1e-12:
            raise IncompatibleMotions(f"dt mismatch: {m.dt} vs {first.dt}")
    if len(motions) == 1:
        return ReferenceMotion(
            dt=first.dt,
            com_pos=first.com_pos.copy(),
            com_rpy=first.com_rpy.copy(),
            com_lin_vel=first.com_lin_vel.copy(),
            com_ang_vel=first.com_ang_vel.copy(),
            foot_pos=first.foot_pos.copy(),
            contact=first.contact.copy(),
            cyclic=first.cyclic,
        )

    pos = [first.com_pos.copy()]
    rpy = [first.com_rpy.copy()]
    lin = [first.com_lin_vel.copy()]
    ang = [first.com_ang_vel.copy()]
    feet = [first.foot_pos.copy()]
    contact = [first.contact.copy()]
    end_pos = first.com_pos[-1]
    end_yaw = first.com_rpy[-1, 2]

    for m in motions[1:]:
        dyaw = end_yaw - m.com_rpy[0, 2]
        rot = rot_z(dyaw)
        p = (rot @ (m.com_pos - m.com_pos[0]).T).T
        p += [end_pos[0], end_pos[1], m.com_pos[0, 2]]
        r = m.com_rpy.copy()
        r[:, 2] += dyaw
        pos.append(p[1:])
        rpy.append(r[1:])
        lin.append((rot @ m.com_lin_vel.T).T[1:])
        ang.append((rot @ m.com_ang_vel.T).T[1:])
        feet.append(m.foot_pos[1:].copy())
        contact.append(m.contact[1:].copy())
        end_pos = p[-1]
        end_yaw = r[-1, 2]

    return ReferenceMotion(
        dt=first.dt,
        com_pos=np.concatenate(pos),
        com_rpy=np.concatenate(rpy),
        com_lin_vel=np.concatenate(lin),
        com_ang_vel=np.concatenate(ang),
        foot_pos=np.concatenate(feet),
        contact=np.concatenate(contact),
        cyclic=False,
    )


@dataclass
class StitchedResult:
    motion: ReferenceMotion    # stitched reconstruction at the optimum
    params: np.ndarray         # (n_segments, 4, 2) optimized (g, a)
    baseline_reward: float     # identity modulation of every segment
    warm_start_reward: float
    best_reward: float
    history: np.ndarray        # best-so-far reward; [0]=baseline, [1]=warm start
    n_evaluations: int


def optimize_stitched(
    dmp_sets: Sequence[DmpSet],
    warm_starts: Sequence[np.ndarray | None] | None = None,
    cma_config: CmaConfig | None = None,
    controller_config: ControllerConfig | None = None,
    model: RobotModel | None = None,
    sim_params: ContactParams | None = None,
    segment_durations: Sequence[float] | None = None,
    weights: RewardWeights | None = None,
) -> StitchedResult:
    """Jointly retune swing height across every segment of a stitched run.

    One decision vector holds all segments' (g, a) pairs, 8 per segment,
    warm-started from the per-segment optima when given. Both anchor
    points, the unmodified fits and the warm start, are scored before the
    search, so the result is never worse than either.
    """
    dmp_sets = list(dmp_sets)
    if not dmp_sets:
        raise ValueError("optimize_stitched needs at least one DmpSet")
    controller_config = controller_config or ControllerConfig()
    n_seg = len(dmp_sets)
    if warm_starts is None:
        warm_starts = [None] * n_seg
    if len(warm_starts) != n_seg:
        raise ValueError(f"{len(warm_starts)} warm starts for {n_seg} segments")
    if segment_durations is None:
        segment_durations = [s.period for s in dmp_sets]

    def split(u: np.ndarray) -> list[np.ndarray]:
        return [
            decision_to_params(dmp_sets[k], u[8 * k : 8 * (k + 1)])
            for k in range(n_seg)
        ]

    def build(u: np.ndarray) -> ReferenceMotion:
        segments = [
            dmps_to_motion(apply_swing_params(s, p), duration=d)
            for s, p, d in zip(dmp_sets, split(u), segment_durations)
        ]
        return stitch(segments)

    u_identity = np.concatenate(
        [params_to_decision(s, _fit_anchors(s)) for s in dmp_sets]
    )
    u_warm = np.concatenate([
        params_to_decision(s, _fit_anchors(s) if w is None else w)
        for s, w in zip(dmp_sets, warm_starts)
    ])

    dim = 8 * n_seg
    base = cma_config or CmaConfig(dimension=dim)
    config = replace(
        base,
        dimension=dim,
        bounds=np.array([[0.0, 1.0]] * dim),
        x0=u_warm,
        scales=np.tile(_SWING_SCALES, n_seg),
    )
    objective = _episode_objective(
        build, controller_config, model, sim_params, None, weights, base.seed,
    )

    f_identity = objective(u_identity)
    f_warm = objective(u_warm)
    result = cma_es(objective, config)

    candidates = [(f_identity, u_identity), (f_warm, u_warm), (result.best_f, result.best_x)]
    best_f, best_u = min(candidates, key=lambda c: c[0])
    history = -np.minimum.accumulate(
        np.concatenate([[f_identity, f_warm], result.history])
    )

    return StitchedResult(
        motion=build(best_u),
        params=np.array(split(best_u)),
        baseline_reward=-f_identity,
        warm_start_reward=-f_warm,
        best_reward=-float(best_f),
        history=history,
        n_evaluations=result.n_evaluations + 2,
    )
