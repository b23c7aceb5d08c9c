"""Corridor demo: fold past a wall-like capsule, pass a waypoint, stop at the goal.

Runs the corridor scenario closed-loop, prints the headline metrics, and
renders the workspace view (arm snapshots, obstacle, end-effector path) plus
the clearance profile to corridor_run.png.
"""

import json
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from waypoint_mpc.collision import fk_points
from waypoint_mpc.harness import load_scenario, run_closed_loop

ROOT = pathlib.Path(__file__).resolve().parent.parent


def link_points(arm, q):
    """Joint positions of the planar chain, base included."""
    pts = [np.zeros(2)]
    angle = 0.0
    for length, qi in zip(arm.link_lengths, q):
        angle += qi
        pts.append(pts[-1] + length * np.array([np.cos(angle), np.sin(angle)]))
    return np.array(pts)


def main():
    scenario = load_scenario(json.load(open(ROOT / "scenarios" / "corridor.json")))
    result = run_closed_loop(scenario, max_steps=400)
    metrics = result.metrics
    print(f"terminated: {result.terminated} after {metrics.iterations} iterations")
    print(f"path length: {metrics.path_length:.3f} rad")
    print(f"waypoint pass errors: {['%.2e' % e for e in metrics.waypoint_pass_errors]}")
    print(f"minimum clearance: {metrics.min_clearance:.4f} m")
    print(f"planning time: max {1e3 * metrics.planning_time_max:.1f} ms")

    records = result.trace.records
    qs = np.array([r.xs[0][:2] for r in records])
    ee = np.array([fk_points(scenario.robot, q)[-1][0] for q in qs])

    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(11, 5))

    capsule = scenario.world.obstacles[0]
    p0, p1 = np.array(capsule.p0), np.array(capsule.p1)
    for t in np.linspace(0, 1, 30):
        c = p0 + t * (p1 - p0)
        ax.add_patch(plt.Circle(c, capsule.radius, color="crimson", alpha=0.08, lw=0))
    ax.add_patch(plt.Circle(p0, capsule.radius, color="crimson", alpha=0.4, label="obstacle"))
    ax.add_patch(plt.Circle(p1, capsule.radius, color="crimson", alpha=0.4))

    for i in np.linspace(0, len(qs) - 1, 12, dtype=int):
        pts = link_points(scenario.robot, qs[i])
        ax.plot(pts[:, 0], pts[:, 1], "-o", color="steelblue", alpha=0.35, ms=3)
    ax.plot(ee[:, 0], ee[:, 1], color="darkorange", lw=2, label="end-effector path")
    for label, q in (("start", scenario.start), ("waypoint", scenario.waypoints[0]), ("goal", scenario.waypoints[1])):
        tip = link_points(scenario.robot, q)[-1]
        ax.plot(*tip, "k*" if label != "waypoint" else "g^", ms=12)
        ax.annotate(label, tip, textcoords="offset points", xytext=(6, 6))
    ax.set_aspect("equal")
    ax.set_title("workspace view")
    ax.legend(loc="lower left")

    ax2.plot([r.n * 0.1 for r in records], [r.min_distance for r in records], lw=2)
    ax2.axhline(0.0, color="crimson", ls="--")
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("min signed distance [m]")
    ax2.set_title(f"clearance (min {metrics.min_clearance:.3f} m)")

    out = pathlib.Path(__file__).with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    print(f"figure saved to {out}")


if __name__ == "__main__":
    main()
