"""No-stop passage demo: drive through a collinear waypoint without pausing.

Shows the split/shrink bookkeeping (the sawtooth of the two horizon lengths)
and the joint-space speed profile: the passage sample keeps a healthy share
of the peak speed instead of stopping at the waypoint.
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
    scenario = load_scenario(json.load(open(ROOT / "scenarios" / "free_space.json")))
    result = run_closed_loop(scenario, max_steps=300)
    records = result.trace.records
    h = scenario.params.model.h

    times = np.array([r.n * h for r in records])
    speeds = np.array([np.linalg.norm(r.xs[0][2:4]) for r in records])
    splits = np.array([r.n_split for r in records])
    horizons = np.array([r.n_horizon for r in records])

    pass_idx = next(i for i, r in enumerate(records) if r.n_split <= 1)
    v_pass, v_peak = speeds[pass_idx], speeds.max()
    print(f"waypoint passed at t={times[pass_idx]:.1f}s at {v_pass:.3f} rad/s "
          f"({v_pass / v_peak:.0%} of the peak {v_peak:.3f} rad/s)")
    print(f"pass error: {result.metrics.waypoint_pass_errors[0]:.2e} rad")

    fig, (ax, ax2) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    ax.step(times, splits, where="post", label="samples to waypoint", lw=2)
    ax.step(times, horizons, where="post", label="active horizon", lw=2)
    ax.axvline(times[pass_idx], color="green", ls=":", label="waypoint passed")
    ax.set_ylabel("samples")
    ax.set_title("split and shrinking horizons")
    ax.legend()

    ax2.plot(times, speeds, lw=2)
    ax2.axvline(times[pass_idx], color="green", ls=":")
    ax2.axhline(0.5 * v_peak, color="gray", ls="--", label="half of peak speed")
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("joint-space speed [rad/s]")
    ax2.legend()

    out = pathlib.Path(__file__).with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    print(f"figure saved to {out}")


if __name__ == "__main__":
    main()
