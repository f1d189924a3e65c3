"""Command line front end.

Subcommands:
    generate  evolve road test cases and export them as JSON
    run       simulate one controller on one road, with CSV/SVG artifacts
    batch     run every (model, road) pair from a tests directory
    plot      render a road (and optional trajectories) to SVG
    report    summarize a batch report CSV
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

from . import build_controller
from .engine import EngineError
from .fileio import atomic_write
from .model import ModelError, parse_model, parse_params
from .plot import render_svg
from .roadgen import GAConfig, export_tests, nsga2, summary_csv
from .sim import (
    DEFAULT_MAP_SCALE,
    RoadError,
    RobotParams,
    SimulationError,
    road_from_json,
    simulate,
)


class UsageError(Exception):
    pass


def _default_seed():
    env = os.environ.get("ENPS_LAB_SEED")
    return int(env) if env else 0


def _load_controller(spec, params_path):
    """'m1' / 'm2' build the shipped models; anything else is a model file."""
    if spec in ("m1", "m2"):
        params = None
        if params_path:
            with open(params_path, encoding="utf-8") as handle:
                params = parse_params(handle.read())
        return build_controller(spec, params)
    with open(spec, encoding="utf-8") as handle:
        return parse_model(handle.read())


def _load_road(path, scale=DEFAULT_MAP_SCALE):
    with open(path, encoding="utf-8") as handle:
        return road_from_json(handle.read(), scale=scale)


def _trajectory_csv(result):
    lines = ["step,x,y,heading,lw,rw"]
    for i, pose in enumerate(result.trajectory):
        if i < len(result.wheel_speeds):
            lw, rw = result.wheel_speeds[i]
            lines.append(f"{i},{pose.x!r},{pose.y!r},{pose.heading!r},{lw!r},{rw!r}")
        else:
            lines.append(f"{i},{pose.x!r},{pose.y!r},{pose.heading!r},,")
    return "\n".join(lines) + "\n"


def _variables_csv(traces):
    if not traces:
        return "step\n"
    columns = list(traces[0].snapshot.keys())  # membrane preorder, decl order
    lines = ["step," + ",".join(columns)]
    for trace in traces:
        lines.append(str(trace.step) + "," + ",".join(repr(trace.snapshot[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _read_trajectory(path):
    points = []
    with open(path, encoding="utf-8") as handle:
        header = handle.readline()
        for line in handle:
            parts = line.strip().split(",")
            if len(parts) >= 3:
                points.append((float(parts[1]), float(parts[2])))
    return points


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args):
    config = GAConfig(
        population=args.pop,
        generations=args.gens,
        mutation_rate=args.mutation,
        crossover_rate=args.crossover,
        map_size=args.map_size,
        oob_threshold=args.oob_threshold,
        time_budget=args.time_budget,
        seed=args.seed,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    tests = nsga2(config)
    paths = export_tests(tests, args.out, config)
    atomic_write(os.path.join(args.out, "summary.csv"), summary_csv(tests))
    if tests:
        f1s = [t.f1 for t in tests]
        f2s = [t.f2 for t in tests]
        print(
            f"exported {len(paths)} tests to {args.out} "
            f"(f1 {min(f1s):.4f}..{max(f1s):.4f}, f2 {min(f2s):.4f}..{max(f2s):.4f})"
        )
    else:
        print(f"exported 0 tests to {args.out}")
    return 0


def cmd_run(args):
    controller = _load_controller(args.model, args.params)
    road = _load_road(args.road)
    result = simulate(
        controller,
        road,
        RobotParams(),
        max_steps=args.max_steps,
        seed=args.seed,
        collect_traces=True,
    )
    os.makedirs(args.out, exist_ok=True)
    atomic_write(os.path.join(args.out, "trajectory.csv"), _trajectory_csv(result))
    atomic_write(os.path.join(args.out, "variables.csv"), _variables_csv(result.traces))
    atomic_write(
        os.path.join(args.out, "run.svg"), render_svg(road, [result.trajectory])
    )
    print(f"outcome: {result.outcome} after {result.steps} steps")
    if result.failure_position is not None:
        x, y = result.failure_position
        print(f"left the road at ({x:.4f}, {y:.4f})")
    return 0


def _batch_one(model_spec, params_path, road_path, max_steps, seed):
    row = {"road": os.path.basename(road_path), "model": model_spec}
    try:
        with open(road_path, encoding="utf-8") as handle:
            doc = json.loads(handle.read())
        row["max_curvature"] = doc.get("max_curvature", "")
        controller = _load_controller(model_spec, params_path)
        road = _load_road(road_path)
        result = simulate(controller, road, max_steps=max_steps, seed=seed)
        row["outcome"] = result.outcome
        row["steps"] = result.steps
    except (OSError, ValueError, RoadError, SimulationError, ModelError, EngineError) as exc:
        row["outcome"] = "error"
        row["steps"] = ""
        row.setdefault("max_curvature", "")
        row["error"] = str(exc)
    return row


def cmd_batch(args):
    roads = sorted(
        os.path.join(args.tests_dir, name)
        for name in os.listdir(args.tests_dir)
        if name.endswith(".json")
    )
    if not roads:
        raise UsageError(f"no .json test files in {args.tests_dir}")
    models = args.model or ["m1", "m2"]
    jobs = [(m, args.params, r, args.max_steps, args.seed) for r in roads for m in models]

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_batch_one_star, jobs))
    else:
        rows = [_batch_one(*job) for job in jobs]
    rows.sort(key=lambda r: (r["road"], r["model"]))

    lines = ["road,model,outcome,steps,max_curvature"]
    for row in rows:
        lines.append(
            f"{row['road']},{row['model']},{row['outcome']},{row['steps']},{row['max_curvature']}"
        )
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.csv")
    atomic_write(report_path, "\n".join(lines) + "\n")

    for model in models:
        mine = [r for r in rows if r["model"] == model]
        passed = sum(1 for r in mine if r["outcome"] == "completed")
        print(f"{model}: {passed}/{len(mine)} roads completed")
    print(f"report written to {report_path}")
    return 0


def _batch_one_star(job):
    return _batch_one(*job)


def cmd_plot(args):
    road = _load_road(args.road)
    trajectories = []
    for path in (args.m1_traj, args.m2_traj):
        trajectories.append(_read_trajectory(path) if path else [])
    svg = render_svg(road, trajectories)
    atomic_write(args.out, svg)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args):
    with open(args.report, encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
        rows = [dict(zip(header, line.strip().split(","))) for line in handle if line.strip()]
    if not rows:
        raise UsageError(f"empty report: {args.report}")
    models = sorted({r["model"] for r in rows})
    for model in models:
        mine = [r for r in rows if r["model"] == model]
        passed = sum(1 for r in mine if r["outcome"] == "completed")
        failed = sum(1 for r in mine if r["outcome"] == "off_road")
        errors = sum(1 for r in mine if r["outcome"] == "error")
        print(
            f"{model}: {passed} completed, {failed} off_road, {errors} error "
            f"({passed}/{len(mine)} = {passed / len(mine):.0%} pass rate)"
        )
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="enps-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="evolve and export road tests")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--pop", type=int, default=100)
    gen.add_argument("--gens", type=int, default=75)
    gen.add_argument("--mutation", type=float, default=0.4)
    gen.add_argument("--crossover", type=float, default=1.0)
    gen.add_argument("--map-size", type=float, default=200.0)
    gen.add_argument("--time-budget", type=float, default=1800.0)
    gen.add_argument("--oob-threshold", type=float, default=0.95)
    gen.add_argument("--seed", type=int, default=_default_seed())
    gen.set_defaults(func=cmd_generate)

    runp = sub.add_parser("run", help="simulate one controller on one road")
    runp.add_argument("--model", required=True, help="'m1', 'm2' or a model file path")
    runp.add_argument("--params", help="controller params file (for m1/m2)")
    runp.add_argument("--road", required=True, help="road JSON file")
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--max-steps", type=int, default=5000)
    runp.add_argument("--seed", type=int, default=_default_seed())
    runp.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="run models across a tests directory")
    batch.add_argument("--model", action="append", help="repeatable; default m1 and m2")
    batch.add_argument("--params", help="controller params file (for m1/m2)")
    batch.add_argument("--tests-dir", required=True)
    batch.add_argument("--out", required=True)
    batch.add_argument("--max-steps", type=int, default=5000)
    batch.add_argument("--jobs", type=int, default=1)
    batch.add_argument("--seed", type=int, default=_default_seed())
    batch.set_defaults(func=cmd_batch)

    plotp = sub.add_parser("plot", help="render road and trajectories to SVG")
    plotp.add_argument("--road", required=True)
    plotp.add_argument("--m1-traj", help="trajectory CSV drawn in red")
    plotp.add_argument("--m2-traj", help="trajectory CSV drawn in green")
    plotp.add_argument("--out", required=True, help="output SVG path")
    plotp.set_defaults(func=cmd_plot)

    rep = sub.add_parser("report", help="summarize a batch report CSV")
    rep.add_argument("--report", required=True, help="report.csv from batch")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, RoadError, SimulationError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
