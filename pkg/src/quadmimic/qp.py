"""Dense convex QP for stance contact forces, solved with a primal active set.

Problem family: minimize ||A f - b||^2_Q + f^T R f over per-leg ground
reaction forces f, subject to a linearized friction pyramid and vertical
force bounds for every stance leg. A maps stacked leg forces to CoM
acceleration (6 rows: linear then angular), b is the desired acceleration
plus gravity. Swing legs are excluded from the problem entirely.

The solver is warm-startable (re-seeds from the previous active set when the
stance set is unchanged) and sized for 500 Hz use: n <= 12 variables,
m <= 24 inequality rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import rot_zyx, skew
from .robot import RobotModel

# Per-leg inequality row layout (6 rows per stance leg, used by the feasible
# start): fx-mu*fz, -fx-mu*fz, fy-mu*fz, -fy-mu*fz, -fz, +fz.
ROWS_PER_LEG = 6


@dataclass(frozen=True)
class StanceQpConfig:
    q_diag: tuple = (1.0, 1.0, 10.0, 10.0, 10.0, 1.0)
    r_scale: float = 1e-4
    friction: float = 0.6
    fz_min: float = 5.0
    fz_max_factor: float = 1.5   # fz_max = factor * m * g per leg
    gravity: float = 9.8


@dataclass
class QpProblem:
    A: np.ndarray            # (6, 3n)
    b: np.ndarray            # (6,)
    Q: np.ndarray            # (6,6) diagonal weights
    R: np.ndarray            # (3n, 3n)
    G: np.ndarray            # (m, 3n) inequality rows, G f <= h
    h: np.ndarray            # (m,)
    legs: tuple              # stance leg indices, ascending
    fz_min: float
    fz_max: float
    friction: float = 0.6
    # standard-form data 0.5 f'Hf + c'f (+ bqb), derived once at assembly;
    # None when a problem is built by hand, solve() then derives them
    H: np.ndarray | None = None
    c: np.ndarray | None = None
    bqb: float | None = None

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]


@dataclass
class QpSolution:
    forces: np.ndarray       # (3n,)
    objective: float
    status: str              # Optimal | Infeasible | MaxIter
    kkt_residual: float
    iterations: int
    active_set: tuple = ()
    legs: tuple = ()


def build_stance_problem(
    model: RobotModel,
    com_pos,
    com_rpy,
    foot_pos_world,          # (4,3) world, all legs; swing rows ignored
    stance_legs,
    desired_accel,           # (6,) CoM acceleration target, world
    config: StanceQpConfig = StanceQpConfig(),
) -> QpProblem:
    """Assemble the stance-force QP for the given stance set."""
    legs = tuple(sorted(int(l) for l in stance_legs))
    n = len(legs)
    if n == 0:
        raise ValueError("stance set is empty")
    com = np.asarray(com_pos, dtype=float)
    R_wb = rot_zyx(com_rpy)
    I_world = R_wb @ model.inertia_body @ R_wb.T
    I_inv = np.linalg.inv(I_world)

    A = np.zeros((6, 3 * n))
    for k, leg in enumerate(legs):
        A[0:3, 3 * k : 3 * k + 3] = np.eye(3) / model.mass
        A[3:6, 3 * k : 3 * k + 3] = I_inv @ skew(np.asarray(foot_pos_world[leg]) - com)

    g = config.gravity
    b = np.asarray(desired_accel, dtype=float) + np.array([0.0, 0.0, g, 0.0, 0.0, 0.0])

    mu = config.friction
    fz_max = config.fz_max_factor * model.mass * g
    G = np.zeros((ROWS_PER_LEG * n, 3 * n))
    h = np.zeros(ROWS_PER_LEG * n)
    for k in range(n):
        r0, c0 = ROWS_PER_LEG * k, 3 * k
        G[r0 + 0, c0] = 1.0
        G[r0 + 0, c0 + 2] = -mu
        G[r0 + 1, c0] = -1.0
        G[r0 + 1, c0 + 2] = -mu
        G[r0 + 2, c0 + 1] = 1.0
        G[r0 + 2, c0 + 2] = -mu
        G[r0 + 3, c0 + 1] = -1.0
        G[r0 + 3, c0 + 2] = -mu
        G[r0 + 4, c0 + 2] = -1.0
        h[r0 + 4] = -config.fz_min
        G[r0 + 5, c0 + 2] = 1.0
        h[r0 + 5] = fz_max

    Q = np.diag(config.q_diag)
    R = config.r_scale * np.eye(3 * n)
    return QpProblem(
        A=A,
        b=b,
        Q=Q,
        R=R,
        G=G,
        h=h,
        legs=legs,
        fz_min=config.fz_min,
        fz_max=fz_max,
        friction=mu,
        H=2.0 * (A.T @ Q @ A + R),
        c=-2.0 * (A.T @ (Q @ b)),
        bqb=float(b @ (Q @ b)),
    )


def qp_objective(problem: QpProblem, f) -> float:
    e = problem.A @ f - problem.b
    return float(e @ problem.Q @ e + f @ problem.R @ f)


def _project_feasible(problem: QpProblem, f: np.ndarray) -> np.ndarray:
    """Per-leg projection into the pyramid; used to seed from a warm start."""
    f = f.copy()
    fz = np.minimum(np.maximum(f[2::3], problem.fz_min), problem.fz_max)
    lim = problem.friction * fz
    f[0::3] = np.minimum(np.maximum(f[0::3], -lim), lim)
    f[1::3] = np.minimum(np.maximum(f[1::3], -lim), lim)
    f[2::3] = fz
    return f


def _feasible_start(problem: QpProblem) -> np.ndarray:
    f = np.zeros(problem.n_vars)
    mid = 0.5 * (problem.fz_min + problem.fz_max)
    f[2::3] = mid
    return f


def solve(problem: QpProblem, warm_start: QpSolution | None = None, max_iter: int = 60) -> QpSolution:
    """Primal active-set solve. Strictly convex: R > 0 guarantees unique argmin.

    warm_start: a previous solution for the same stance set; its active set
    seeds the working set and its forces the iterate.
    """
    if problem.H is not None:
        H, c = problem.H, problem.c
        bqb = problem.bqb
    else:
        H = 2.0 * (problem.A.T @ problem.Q @ problem.A + problem.R)
        c = -2.0 * (problem.A.T @ (problem.Q @ problem.b))
        bqb = float(problem.b @ (problem.Q @ problem.b))
    G, h = problem.G, problem.h
    m = len(h)

    if problem.fz_min > problem.fz_max:
        return QpSolution(
            forces=np.zeros(problem.n_vars),
            objective=math.inf,
            status="Infeasible",
            kkt_residual=math.inf,
            iterations=0,
            legs=problem.legs,
        )

    if warm_start is not None and warm_start.legs == problem.legs and len(warm_start.forces) == problem.n_vars:
        x = _project_feasible(problem, np.asarray(warm_start.forces, dtype=float))
        work = [i for i in warm_start.active_set if i < m]
    else:
        x = _feasible_start(problem)
        work = []

    # The 500 Hz budget rules out redundant factorizations: the typical
    # warm-started tick resolves in one saddle (or one unconstrained) solve,
    # so everything else is assembled lazily and in place.
    n = problem.n_vars
    x_free = None
    in_work = np.zeros(m, dtype=bool)
    in_work[work] = True

    lam_full = np.zeros(m)
    n_iter = 0
    status = "MaxIter"
    for n_iter in range(1, max_iter + 1):
        # Equality-constrained subproblem on the working set.
        nw = len(work)
        if nw:
            idx = np.asarray(work)
            K = np.zeros((n + nw, n + nw))
            K[:n, :n] = H
            K[:n, n:] = G[idx].T
            K[n:, :n] = G[idx]
            rhs = np.empty(n + nw)
            rhs[:n] = -c
            rhs[n:] = h[idx]
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            x_eq = sol[:n]
            lam_w = sol[n:]
        else:
            if x_free is None:
                x_free = np.linalg.solve(H, -c)
            x_eq = x_free
            lam_w = np.zeros(0)

        p = x_eq - x
        if np.abs(p).max() < 1e-11:
            # at the working-set minimizer: check multiplier signs
            if nw == 0 or lam_w.min() >= -1e-9:
                lam_full[work] = np.maximum(lam_w, 0.0)
                status = "Optimal"
                x = x_eq
                break
            drop = work.pop(int(np.argmin(lam_w)))
            in_work[drop] = False
            continue

        # longest feasible step toward x_eq, first blocking constraint wins
        gp = G @ p
        gx = G @ x
        movable = (gp > 1e-13) & ~in_work
        ratios = np.where(movable, (h - gx) / np.where(movable, gp, 1.0), np.inf)
        blocker = int(np.argmin(ratios))
        alpha = min(float(ratios[blocker]), 1.0)
        x = x + max(alpha, 0.0) * p
        if alpha < 1.0:
            work.append(blocker)
            in_work[blocker] = True

    gxh = G @ x - h
    viol = max(0.0, float(gxh.max())) if m else 0.0
    if status == "Optimal":
        Hx = H @ x
        grad = Hx + c
        if work:
            grad = grad + G.T @ lam_full
            comp = float(np.abs(lam_full * gxh).max(initial=0.0))
        else:
            comp = 0.0
        kkt = max(viol, float(np.abs(grad).max()), comp)
        objective = float(0.5 * (x @ Hx) + c @ x + bqb)
    else:
        kkt = viol
        objective = qp_objective(problem, x)

    return QpSolution(
        forces=x,
        objective=objective,
        status=status,
        kkt_residual=kkt,
        iterations=n_iter,
        active_set=tuple(work),
        legs=problem.legs,
    )
