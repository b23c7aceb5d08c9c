"""Command-line entry points: batch runs, trace metrics, gradient checks,
and the live steering server."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys

from . import gradcheck
from .harness import ScenarioError, compute_metrics, load_scenario, load_trace, replay, run_closed_loop
from .trace import export_trace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCHEMA = 2
EXIT_IK = 3
EXIT_DIVERGENCE = 4
EXIT_SOLVER = 5


def _load_scenario_file(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_SCHEMA)
    except json.JSONDecodeError as exc:
        print(f"error: scenario is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_SCHEMA)
    try:
        return load_scenario(document)
    except ScenarioError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IK if exc.code == "ik" else EXIT_SCHEMA)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario_file(args.scenario)
    result = run_closed_loop(scenario, max_steps=args.max_steps)
    if args.trace:
        export_trace(result.trace, args.trace)
        print(f"trace written to {args.trace} ({len(result.trace.records)} records)")
    metrics = result.metrics
    degraded = sum(1 for r in result.trace.records if r.status == "degraded")
    print(
        f"iterations: {metrics.iterations}  terminated: {result.terminated}\n"
        f"path length: {metrics.path_length:.4f} rad\n"
        f"trajectory duration: {metrics.trajectory_duration:.2f} s\n"
        f"planning time: max {1e3 * metrics.planning_time_max:.1f} ms, "
        f"avg {1e3 * metrics.planning_time_avg:.1f} ms\n"
        f"waypoint pass errors: {['%.2e' % e for e in metrics.waypoint_pass_errors]}\n"
        f"min clearance: {metrics.min_clearance if metrics.min_clearance != float('inf') else 'n/a'}"
    )
    print(json.dumps(metrics.to_dict()))
    if not result.terminated:
        return EXIT_SOLVER if degraded else EXIT_DIVERGENCE
    if degraded:
        print(f"warning: {degraded} degraded iterations", file=sys.stderr)
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    try:
        trace = load_trace(args.trace)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load trace: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    metrics = compute_metrics(trace)
    report = replay(trace)
    print(json.dumps({"metrics": metrics.to_dict(), "replay_ok": report.ok, "issues": report.issues}))
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_check_grad(args: argparse.Namespace) -> int:
    report = gradcheck.check_gradients(seed=args.seed, count=args.count)
    for family, err in report.families.items():
        flag = "ok" if err <= report.tolerance else "FAIL"
        print(f"{family:20s} max rel error {err:.3e}  [{flag}]")
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve_forever

    scenario = _load_scenario_file(args.scenario)
    try:
        asyncio.run(serve_forever(scenario, args.host, args.port, realtime=not args.fast))
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waypoint-mpc",
        description="Waypoint model-predictive trajectory planning: batch runs, metrics, and a live steering server.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario closed-loop and report metrics")
    run_p.add_argument("scenario", help="scenario JSON file")
    run_p.add_argument("--trace", help="write a JSON-lines trace here")
    run_p.add_argument("--max-steps", type=int, default=600)
    run_p.set_defaults(func=cmd_run)

    metrics_p = sub.add_parser("metrics", help="metrics and replay validation for a trace file")
    metrics_p.add_argument("trace", help="trace file from a previous run")
    metrics_p.set_defaults(func=cmd_metrics)

    grad_p = sub.add_parser("check-grad", help="finite-difference validation of all gradients")
    grad_p.add_argument("--seed", type=int, default=0)
    grad_p.add_argument("--count", type=int, default=100)
    grad_p.set_defaults(func=cmd_check_grad)

    serve_p = sub.add_parser("serve", help="stream a live run over WebSocket and accept edits")
    serve_p.add_argument("scenario", help="scenario JSON file")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8765)
    serve_p.add_argument("--fast", action="store_true", help="run as fast as possible instead of real time")
    serve_p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("WAYPOINT_MPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
