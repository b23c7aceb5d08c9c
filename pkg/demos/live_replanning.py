"""Replanning demo: the goal jumps mid-run and the horizons reset.

The scripted event moves the goal while the robot is in flight. The next
iteration shows both horizon lengths back at the maximum, and the loop then
converges to the new target.
"""

import json
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from waypoint_mpc.harness import load_scenario, run_closed_loop

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    scenario = load_scenario(json.load(open(ROOT / "scenarios" / "replanning.json")))
    result = run_closed_loop(scenario, max_steps=400)
    records = result.trace.records
    h = scenario.params.model.h

    event = next(r for r in records if r.event_applied)
    print(f"goal moved at t={event.n * h:.1f}s; record shows horizons "
          f"{event.n_split}/{event.n_horizon} (maximum {scenario.params.n_max})")
    print(f"terminated: {result.terminated} after {len(records)} iterations")

    times = np.array([r.n * h for r in records])
    qs = np.array([r.xs[0][:2] for r in records])
    goals = np.array([r.q_g for r in records])

    fig, (ax, ax2) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for j, color in ((0, "steelblue"), (1, "darkorange")):
        ax.plot(times, qs[:, j], color=color, lw=2, label=f"joint {j}")
        ax.plot(times, goals[:, j], color=color, ls="--", alpha=0.6, label=f"goal {j}")
    ax.axvline(event.n * h, color="crimson", ls=":", label="goal moved")
    ax.set_ylabel("position [rad]")
    ax.legend(ncol=2)
    ax.set_title("joint trajectories while the goal moves")

    ax2.step(times, [r.n_split for r in records], where="post", lw=2, label="samples to waypoint")
    ax2.step(times, [r.n_horizon for r in records], where="post", lw=2, label="active horizon")
    ax2.axvline(event.n * h, color="crimson", ls=":")
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("samples")
    ax2.legend()

    out = pathlib.Path(__file__).with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    print(f"figure saved to {out}")


if __name__ == "__main__":
    main()
