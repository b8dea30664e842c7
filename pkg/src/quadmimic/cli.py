"""Command-line front end for the motion imitation pipeline.

Subcommands cover the full workflow: synthesize reference gaits, fit DMP
parameter files, run closed-loop rollouts with either swing policy,
optimize swing height against episode reward, compare controllers across
motions, and stitch sequences. Outputs are plain CSV (plus standalone SVG
for the comparison chart) written under one output directory.

Exit codes: 0 success, 1 usage, 2 bad data or paths, 3 simulator
divergence. Every command that takes --seed writes bit-identical outputs
when rerun with the same inputs and seed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields, replace

import yaml

from .control import ControllerConfig, StanceQpConfig
from .dmp import CHANNEL_NAMES, motion_to_dmps, save_dmps
from .errors import (
    DivergedError,
    IncompatibleMotions,
    PastEnd,
    SchemaError,
    SpecError,
    UnitError,
)
from .motion import GaitSpec, ReferenceMotion, load_motion, save_motion, synthesize_gait, validate
from .optimize import CmaConfig, optimize_stitched, optimize_swing_z, stitch
from .reward import evaluate_episode
from .robot import RobotModel, default_model, load_robot

OUT_DIR_ENV = "QUADMIMIC_OUT"

_GAIT_FLAGS = ("speed", "yaw_rate", "stance_height", "duty_factor", "frequency", "clearance")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the documented contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


@dataclass
class RunConfig:
    """Resolved run context: defaults, then config file, then flags."""

    out_dir: str
    seed: int
    duration: float | None
    model: RobotModel
    controller: ControllerConfig


def _load_yaml(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise SchemaError(f"config file {path} must hold a mapping")
    return data


def _controller_from(overrides: dict) -> ControllerConfig:
    known = {f.name for f in fields(ControllerConfig)}
    bad = set(overrides) - known
    if bad:
        raise SchemaError(f"unknown controller keys: {sorted(bad)}")
    kwargs = {}
    for key, val in overrides.items():
        if key == "qp":
            if not isinstance(val, dict):
                raise SchemaError("controller.qp must be a mapping")
            kwargs[key] = StanceQpConfig(**val)
        elif isinstance(val, list):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    return ControllerConfig(**kwargs)


def resolve_run_config(args) -> RunConfig:
    file_cfg: dict = {}
    if getattr(args, "config", None):
        file_cfg = _load_yaml(args.config)

    out_dir = (
        getattr(args, "out", None)
        or file_cfg.get("out_dir")
        or os.environ.get(OUT_DIR_ENV)
        or "."
    )
    os.makedirs(out_dir, exist_ok=True)

    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(file_cfg.get("seed", 0))
    duration = getattr(args, "duration", None)
    if duration is None and "duration" in file_cfg:
        duration = float(file_cfg["duration"])

    robot_path = getattr(args, "robot", None) or file_cfg.get("robot")
    model = load_robot(robot_path) if robot_path else default_model()

    controller = _controller_from(file_cfg.get("controller", {}))
    return RunConfig(out_dir, seed, duration, model, controller)


def _out_path(run: RunConfig, explicit, default_name: str) -> str:
    return explicit if explicit else os.path.join(run.out_dir, default_name)


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _print_issues(motion: ReferenceMotion, model: RobotModel) -> None:
    for issue in validate(motion, model):
        print(f"warning: {issue.kind} at frame {issue.frame}: {issue.detail}")


# ----------------------------------------------------------------- commands --

def cmd_synth(args) -> int:
    run = resolve_run_config(args)
    spec = GaitSpec(**{name: getattr(args, name) for name in _GAIT_FLAGS})
    try:
        motion = synthesize_gait(args.gait, spec, args.dt, run.model)
    except SpecError as exc:
        field = str(exc).split(" ", 1)[0]
        if field in _GAIT_FLAGS:
            raise SpecError(f"--{field.replace('_', '-')}: {exc}") from exc
        raise
    path = _out_path(run, args.output, f"{args.gait.replace('-', '_')}.csv")
    save_motion(motion, path)
    _print_issues(motion, run.model)
    print(f"wrote {path}: {len(motion.com_pos)} frames, period {motion.duration:.4f} s")
    return 0


def cmd_fit(args) -> int:
    run = resolve_run_config(args)
    motion = load_motion(args.motion)
    dmps = motion_to_dmps(motion, n_basis=args.n_basis)
    stem = _stem(args.motion)
    dmp_path = _out_path(run, args.output, f"{stem}_dmps.json")
    save_dmps(dmps, dmp_path)

    report_path = os.path.join(run.out_dir, f"{stem}_fit_report.csv")
    lines = ["channel,fit_rmse,degenerate"]
    for name in CHANNEL_NAMES:
        p = dmps.channels[name]
        lines.append(f"{name},{p.fit_rmse!r},{int(p.degenerate)}")
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    worst = max(dmps.channels.values(), key=lambda p: p.fit_rmse)
    print(f"wrote {dmp_path}: {len(dmps.channels)} channels, period {dmps.period:.4f} s")
    print(f"wrote {report_path}; worst fit RMSE {worst.fit_rmse:.2e}")
    return 0


def cmd_rollout(args) -> int:
    run = resolve_run_config(args)
    motion = load_motion(args.motion)
    config = run.controller
    if args.controller == "raibert":
        config = replace(config, swing_policy="raibert")
    result = evaluate_episode(
        motion,
        config,
        model=run.model,
        duration=run.duration,
        seed=run.seed,
        oracle_replay=args.oracle_replay,
        keep_log=args.log is not None,
    )
    if args.log:
        result.log.save(args.log)
        print(f"wrote {args.log}: {len(result.log)} ticks")

    stem = _stem(args.motion)
    summary = _out_path(run, args.output, f"{stem}_{args.controller}_summary.csv")
    with open(summary, "w") as fh:
        fh.write("motion,controller,total_reward,termination,steps_scored,duration,seed\n")
        fh.write(
            f"{stem},{args.controller},{result.total!r},{result.termination},"
            f"{result.steps_scored},{result.duration!r},{result.seed}\n"
        )
    print(
        f"{args.controller} on {stem}: reward {result.total:.4f} "
        f"({result.termination}, {result.steps_scored} ticks); wrote {summary}"
    )
    return 0


def _cma_from_args(args, dimension: int) -> CmaConfig:
    return CmaConfig(
        dimension=dimension,
        population=args.population,
        sigma0=args.sigma0,
        iterations=args.iters,
        seed=args.seed if args.seed is not None else 0,
    )


def _write_history(path, history, mean_history, sigma_history) -> None:
    # row 0 is the anchor evaluation, before the first CMA-ES iteration
    lines = ["iteration,best_reward,mean_reward,sigma"]
    lines.append(f"0,{float(history[0])!r},,")
    for i in range(len(mean_history)):
        lines.append(
            f"{i + 1},{float(history[i + 1])!r},"
            f"{float(mean_history[i])!r},{float(sigma_history[i])!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_optimize(args) -> int:
    run = resolve_run_config(args)
    motion = load_motion(args.motion)
    dmps = motion_to_dmps(motion)
    result = optimize_swing_z(
        dmps,
        run.controller,
        _cma_from_args(args, 8),
        model=run.model,
        eval_duration=args.eval_duration,
    )
    stem = _stem(args.motion)
    motion_path = _out_path(run, args.output, f"{stem}_optimized.csv")
    save_motion(result.motion, motion_path)
    save_dmps(result.dmps, os.path.join(run.out_dir, f"{stem}_optimized_dmps.json"))
    history_path = os.path.join(run.out_dir, f"{stem}_history.csv")
    _write_history(history_path, result.history, result.mean_history, result.sigma_history)

    gain = result.best_reward - result.baseline_reward
    rel = gain / result.baseline_reward * 100 if result.baseline_reward > 0 else math.inf
    print(
        f"baseline {result.baseline_reward:.4f} -> best {result.best_reward:.4f} "
        f"(+{rel:.1f}%) in {result.n_evaluations} evaluations"
    )
    print(f"wrote {motion_path} and {history_path}")
    return 0


_BAR_COLORS = {"mbc": "#4878d0", "mbc_dmp": "#ee854a", "raibert": "#6acc64"}


def _bar_chart_svg(path, names, series) -> None:
    """series: {label: [value per name]}; grouped bars, values in [0, 1]."""
    width, height, margin = 640, 360, 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    group_w = plot_w / max(len(names), 1)
    bar_w = group_w / (len(series) + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = margin + plot_h * (1 - frac)
        parts.append(
            f'<line x1="{margin}" y1="{y:.1f}" x2="{width - margin}" y2="{y:.1f}" '
            f'stroke="#ddd"/>'
            f'<text x="{margin - 6}" y="{y + 4:.1f}" text-anchor="end">{frac:g}</text>'
        )
    for gi, name in enumerate(names):
        x0 = margin + gi * group_w + bar_w / 2
        for si, (label, values) in enumerate(series.items()):
            v = max(0.0, min(1.0, values[gi]))
            bh = plot_h * v
            x = x0 + si * bar_w
            color = _BAR_COLORS.get(label, "#888")
            parts.append(
                f'<rect x="{x:.1f}" y="{margin + plot_h - bh:.1f}" width="{bar_w * 0.9:.1f}" '
                f'height="{bh:.1f}" fill="{color}"/>'
                f'<text x="{x + bar_w * 0.45:.1f}" y="{margin + plot_h - bh - 4:.1f}" '
                f'text-anchor="middle">{values[gi]:.2f}</text>'
            )
        parts.append(
            f'<text x="{margin + gi * group_w + group_w / 2:.1f}" y="{height - margin + 18}" '
            f'text-anchor="middle">{name}</text>'
        )
    for si, label in enumerate(series):
        x = margin + si * 110
        parts.append(
            f'<rect x="{x}" y="{height - 18}" width="12" height="12" '
            f'fill="{_BAR_COLORS.get(label, "#888")}"/>'
            f'<text x="{x + 16}" y="{height - 8}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def cmd_compare(args) -> int:
    run = resolve_run_config(args)
    names, rows = [], []
    for path in args.motions:
        motion = load_motion(path)
        stem = _stem(path)
        names.append(stem)
        mbc = evaluate_episode(
            motion, run.controller, model=run.model, duration=run.duration, seed=run.seed
        )
        raibert = evaluate_episode(
            motion,
            replace(run.controller, swing_policy="raibert"),
            model=run.model,
            duration=run.duration,
            seed=run.seed,
        )
        opt = optimize_swing_z(
            motion_to_dmps(motion),
            run.controller,
            _cma_from_args(args, 8),
            model=run.model,
            eval_duration=args.eval_duration,
        )
        dmp_reward = evaluate_episode(
            opt.motion, run.controller, model=run.model, duration=run.duration, seed=run.seed
        )
        rows.append((stem, mbc.total, dmp_reward.total, raibert.total))
        print(
            f"{stem}: mbc {mbc.total:.4f}  mbc_dmp {dmp_reward.total:.4f}  "
            f"raibert {raibert.total:.4f}"
        )

    csv_path = os.path.join(run.out_dir, "compare.csv")
    with open(csv_path, "w") as fh:
        fh.write("motion,mbc,mbc_dmp,raibert\n")
        for stem, a, b, c in rows:
            fh.write(f"{stem},{a!r},{b!r},{c!r}\n")
    svg_path = os.path.join(run.out_dir, "compare.svg")
    _bar_chart_svg(
        svg_path,
        names,
        {
            "mbc": [r[1] for r in rows],
            "mbc_dmp": [r[2] for r in rows],
            "raibert": [r[3] for r in rows],
        },
    )
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_stitch(args) -> int:
    run = resolve_run_config(args)
    motions = [load_motion(p) for p in args.motions]
    stitched = stitch(motions)
    path = _out_path(run, args.output, "stitched.csv")
    save_motion(stitched, path)
    print(f"wrote {path}: {len(stitched.com_pos)} frames over {stitched.duration:.3f} s")

    if args.optimize:
        sets = [motion_to_dmps(m) for m in motions]
        result = optimize_stitched(
            sets,
            cma_config=_cma_from_args(args, 8 * len(sets)),
            controller_config=run.controller,
            model=run.model,
        )
        opt_path = os.path.join(run.out_dir, "stitched_optimized.csv")
        save_motion(result.motion, opt_path)
        print(
            f"wrote {opt_path}: baseline {result.baseline_reward:.4f} -> "
            f"best {result.best_reward:.4f}"
        )
    return 0


# ------------------------------------------------------------------ parser --

def _add_common(p: argparse.ArgumentParser, seed_default=None):
    p.add_argument("--out", "-o", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    p.add_argument("--config", help="YAML config file: out_dir, seed, controller overrides")
    p.add_argument("--robot", help="robot description YAML (default: built-in model)")
    p.add_argument("--seed", type=int, default=seed_default, help="evaluation seed")


def _add_cma(p: argparse.ArgumentParser):
    p.add_argument("--iters", type=int, default=200, help="CMA-ES iterations")
    p.add_argument("--population", type=int, default=16, help="CMA-ES population")
    p.add_argument("--sigma0", type=float, default=0.3, help="initial step size")
    p.add_argument("--eval-duration", type=float, default=None,
                   help="episode length per candidate, seconds (default: two periods)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadmimic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a reference gait", parents=[])
    p.add_argument("--gait", required=True, help="trot | pace | turn | side-step")
    p.add_argument("--speed", type=float, default=0.0)
    p.add_argument("--yaw-rate", type=float, default=0.0)
    p.add_argument("--stance-height", type=float, default=0.28)
    p.add_argument("--duty-factor", type=float, default=0.6)
    p.add_argument("--frequency", type=float, default=2.0)
    p.add_argument("--clearance", type=float, default=0.08)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--output", help="motion CSV path (default <out>/<gait>.csv)")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a DMP parameter file to a cyclic motion")
    p.add_argument("motion", help="motion CSV")
    p.add_argument("--n-basis", type=int, default=100)
    p.add_argument("--output", help="DMP JSON path (default <out>/<stem>_dmps.json)")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rollout", help="closed-loop episode with reward summary")
    p.add_argument("motion", help="motion CSV")
    p.add_argument("--controller", choices=("mbc", "raibert"), default="mbc")
    p.add_argument("--duration", type=float, help="episode seconds (default: motion length)")
    p.add_argument("--oracle-replay", action="store_true",
                   help="feed the reference back as state; scores 1.0")
    p.add_argument("--log", help="write the full trajectory log CSV here")
    p.add_argument("--output", help="summary CSV path")
    _add_common(p, seed_default=None)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("optimize", help="retune swing-z DMP parameters with CMA-ES")
    p.add_argument("motion", help="cyclic motion CSV")
    p.add_argument("--output", help="optimized motion CSV path")
    _add_cma(p)
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("compare", help="MBC vs MBC-DMP vs Raibert across motions")
    p.add_argument("motions", nargs="+", help="motion CSV files")
    p.add_argument("--duration", type=float, help="episode seconds per motion")
    _add_cma(p)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("stitch", help="concatenate motions with rigid alignment")
    p.add_argument("motions", nargs="+", help="motion CSV files, in order")
    p.add_argument("--output", help="stitched motion CSV path")
    p.add_argument("--optimize", action="store_true",
                   help="jointly retune swing-z across the stitched segments")
    _add_cma(p)
    _add_common(p)
    p.set_defaults(func=cmd_stitch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    try:
        return args.func(args)
    except (SchemaError, UnitError, PastEnd, SpecError, IncompatibleMotions) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"error: simulation diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
