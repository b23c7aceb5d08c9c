"""Receding-horizon planner through waypoints with a split, shrinking horizon.

The planner keeps two horizon lengths: the split index (samples until the
waypoint) and the active horizon (samples until the goal). Both start at the
maximum. Once the waypoint becomes reachable inside the horizon, the horizon
is split there and the waypoint is constrained by a tolerance band; both
lengths then shrink by one sample per iteration so the trajectory commits to
passing the waypoint and stopping at the goal without wasting samples.
Environment changes reset the horizons, which restores feasibility because
the terminal sets widen back to the joint limits.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import nlp
from .collision import CollisionWorld, min_distance
from .costs import CostParams, segment_weights
from .model import FohMatrices, ModelParams, foh_matrices
from .nlp import CostContext, StateBounds
from .trace import TraceRecord


class IkError(ValueError):
    """Cartesian target outside the reachable workspace or joint limits."""


@dataclass
class PlannerParams:
    model: ModelParams
    costs: CostParams
    bounds: StateBounds
    n_max: int = 20
    eps: float = 5e-4
    min_horizon_first: int = 5
    min_horizon_final: int = 2
    solver_tol: float = 1e-6
    solver_max_iter: int = 100
    solver_time_budget: float | None = 0.08
    env_change_tol: float = 1e-3

    def __post_init__(self) -> None:
        if not self.n_max >= self.min_horizon_first >= 3:
            raise ValueError(
                f"need n_max >= min_horizon_first >= 3, got {self.n_max}, {self.min_horizon_first}"
            )
        if self.min_horizon_final < 2:
            raise ValueError("min_horizon_final must be >= 2")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


@dataclass
class HorizonState:
    """Split index and active horizon, plus how they relate to the maximum."""

    n_split: int
    n_horizon: int
    n_max: int

    @property
    def waypoint_split(self) -> bool:
        return self.n_split < self.n_max

    @property
    def goal_found(self) -> bool:
        return self.n_horizon < self.n_max


@dataclass(frozen=True)
class TerminalSets:
    waypoint_lo: np.ndarray
    waypoint_hi: np.ndarray
    goal_lo: np.ndarray
    goal_hi: np.ndarray

    @property
    def waypoint_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.waypoint_lo, self.waypoint_hi

    @property
    def goal_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.goal_lo, self.goal_hi


@dataclass
class WaypointSequence:
    """Ordered joint-space targets; the final element is the goal."""

    points: list[np.ndarray]
    cursor: int = 0

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("sequence needs at least one point")
        self.points = [np.asarray(p, dtype=float).copy() for p in self.points]

    @property
    def single(self) -> bool:
        return len(self.points) == 1

    @property
    def q_w(self) -> np.ndarray:
        return self.points[self.cursor] if not self.single else self.points[0]

    @property
    def q_g(self) -> np.ndarray:
        return self.points[self.cursor + 1] if not self.single else self.points[0]

    @property
    def can_advance(self) -> bool:
        return self.cursor + 2 < len(self.points)

    @property
    def final_goal(self) -> np.ndarray:
        return self.points[-1]

    @property
    def on_final_pair(self) -> bool:
        return self.single or self.cursor + 2 >= len(self.points)


def sign(value: float) -> float:
    """Sign with sign(0) = +1; exact landings are caught by the band test."""
    return 1.0 if value >= 0.0 else -1.0


def check_goal_reachability(
    n_start: int,
    n_stop: int,
    q_target: np.ndarray,
    traj: np.ndarray,
    eps: float,
    q_prev: np.ndarray | None = None,
) -> int:
    """Smallest global index at which every joint has reached its target.

    ``traj`` holds the samples at global indices n_start .. n_stop-1. A joint
    counts as reached at index i when it is inside the tolerance band or when
    the segment from sample i-1 crosses the target (sign change); the flags
    persist once set. ``q_prev`` is the global sample n_start-1, consulted for
    the crossing test at the first slice element; at global index 0 the
    crossing test is skipped. Returns n_stop when the target is never reached.
    """
    if n_start >= n_stop:
        raise ValueError(f"empty range [{n_start}, {n_stop})")
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    q_target = np.asarray(q_target, dtype=float)
    m = q_target.size
    if traj.shape != (n_stop - n_start, m):
        raise ValueError(f"trajectory shape {traj.shape} != ({n_stop - n_start}, {m})")

    reached = np.zeros(m, dtype=bool)
    for i in range(n_start, n_stop):
        q_i = traj[i - n_start]
        for j in range(m):
            d = q_i[j] - q_target[j]
            if abs(d) < eps:
                reached[j] = True
            if i > 0:
                if i - 1 >= n_start:
                    prev = traj[i - 1 - n_start, j]
                elif q_prev is not None:
                    prev = q_prev[j]
                else:
                    continue
                if sign(d) != sign(prev - q_target[j]):
                    reached[j] = True
        if reached.all():
            return i
    return n_stop


def terminal_sets(
    horizon: HorizonState,
    q_w: np.ndarray,
    q_g: np.ndarray,
    eps: float,
    joint_lo: np.ndarray,
    joint_hi: np.ndarray,
) -> TerminalSets:
    """Tolerance band around the waypoint/goal once reachable, else the limits."""
    if horizon.n_split < horizon.n_horizon - 1:
        w_lo, w_hi = q_w - eps, q_w + eps
    else:
        w_lo, w_hi = joint_lo.copy(), joint_hi.copy()
    if horizon.n_horizon < horizon.n_max:
        g_lo, g_hi = q_g - eps, q_g + eps
    else:
        g_lo, g_hi = joint_lo.copy(), joint_hi.copy()
    return TerminalSets(waypoint_lo=w_lo, waypoint_hi=w_hi, goal_lo=g_lo, goal_hi=g_hi)


def inverse_kinematics_planar(
    target: np.ndarray, arm, q_prev: np.ndarray
) -> np.ndarray:
    """Two-link analytic inverse kinematics, nearest branch to q_prev.

    Raises IkError when the target lies outside the annulus workspace or both
    elbow branches violate the joint limits.
    """
    if arm.m != 2:
        raise IkError(f"analytic inverse kinematics needs a 2-link arm, got {arm.m} links")
    x, y = float(target[0]), float(target[1])
    l1, l2 = arm.link_lengths
    r_sq = x * x + y * y
    cos_q2 = (r_sq - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if abs(cos_q2) > 1.0 + 1e-9:
        raise IkError(f"target ({x:.4f}, {y:.4f}) outside the reachable annulus")
    cos_q2 = float(np.clip(cos_q2, -1.0, 1.0))
    lo, hi = arm.limit_arrays()
    candidates = []
    for q2 in (math.acos(cos_q2), -math.acos(cos_q2)):
        q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        q1 = math.atan2(math.sin(q1), math.cos(q1))  # principal value
        q = np.array([q1, q2])
        if np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12):
            candidates.append(q)
    if not candidates:
        raise IkError(f"no inverse kinematics branch within joint limits for ({x:.4f}, {y:.4f})")
    q_prev = np.asarray(q_prev, dtype=float)
    return min(candidates, key=lambda q: float(np.linalg.norm(q - q_prev)))


@dataclass
class StepResult:
    xs: np.ndarray
    us: np.ndarray
    record: TraceRecord


class Planner:
    """Owns the horizon bookkeeping and the per-iteration solve.

    A single control loop drives it strictly sequentially; environment
    changes are applied between plan_step calls.
    """

    def __init__(self, params: PlannerParams, world: CollisionWorld, points: list[np.ndarray]):
        if world.arm.m != params.model.m:
            raise ValueError("collision world and model disagree on the joint count")
        self.params = params
        self.mats: FohMatrices = foh_matrices(params.model)
        self.world = world
        self.sequence = WaypointSequence(points=list(points))
        self.horizon = HorizonState(n_split=params.n_max, n_horizon=params.n_max, n_max=params.n_max)
        self.q_init: np.ndarray | None = None
        self.w1: float = params.costs.w1
        self.w2: float = params.costs.w2
        self.prev_xs: np.ndarray | None = None
        self.prev_us: np.ndarray | None = None
        self.iteration = 0
        self._event_applied = False
        self._advanced = False

    # -- weights ------------------------------------------------------------

    def _recompute_weights(self, q_current: np.ndarray) -> None:
        self.q_init = np.asarray(q_current, dtype=float).copy()
        cp = self.params.costs
        self.w1, self.w2 = segment_weights(
            self.q_init, self.sequence.q_w, self.sequence.q_g, cp.sigma, cp.d_min
        )
        if cp.w3 < max(self.w1, self.w2):
            warnings.warn(
                f"collision weight w3={cp.w3:g} is below the cost-to-go weights "
                f"(w1={self.w1:g}, w2={self.w2:g}); collision avoidance may be dominated",
                stacklevel=3,
            )

    # -- trajectory guesses ---------------------------------------------------

    def _initial_guess(self, x_obs: np.ndarray, u_obs: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.params.model.m
        if self.prev_xs is None:
            xs = np.tile(x_obs, (length, 1))
            us = np.zeros((length, m))
        else:
            xs = self.prev_xs[1:].copy()
            us = self.prev_us[1:].copy()
            xs, us = _fit_length(xs, us, length)
        xs[0] = x_obs
        us[0] = u_obs
        return xs, us

    # -- algorithm steps ------------------------------------------------------

    def plan_step(
        self,
        x_obs: np.ndarray,
        u_obs: np.ndarray,
        new_goal: bool = False,
        world: CollisionWorld | None = None,
    ) -> StepResult:
        """One planning iteration: horizon update, assemble, solve, record."""
        t_begin = time.perf_counter()
        p = self.params
        m = p.model.m
        x_obs = np.asarray(x_obs, dtype=float)
        u_obs = np.asarray(u_obs, dtype=float)
        if world is not None:
            self.update_world(world)

        if new_goal:
            self.horizon = HorizonState(
                n_split=0 if self.sequence.single else p.n_max,
                n_horizon=p.n_max,
                n_max=p.n_max,
            )
            self._recompute_weights(x_obs[:m])

        hs = self.horizon
        xs_guess, us_guess = self._initial_guess(x_obs, u_obs, hs.n_horizon)
        q_guess = xs_guess[:, :m]
        q_w, q_g = self.sequence.q_w, self.sequence.q_g

        if not self.sequence.single and hs.n_split == p.n_max:
            hs.n_split = check_goal_reachability(0, hs.n_split, q_w, q_guess[: hs.n_split], p.eps)
        else:
            hs.n_split = max(hs.n_split - 1, 0)
            if hs.n_horizon == p.n_max:
                lookback = q_guess[hs.n_split - 1] if hs.n_split > 0 else None
                found = check_goal_reachability(
                    hs.n_split, hs.n_horizon, q_g, q_guess[hs.n_split : hs.n_horizon], p.eps, lookback
                )
                hs.n_horizon = max(found, p.min_horizon_first) if found < p.n_max else p.n_max
            else:
                hs.n_horizon = max(hs.n_horizon - 1, p.min_horizon_final)

        xs_guess, us_guess = _fit_length(xs_guess, us_guess, hs.n_horizon)
        result = self._solve(x_obs, u_obs, xs_guess, us_guess)

        degraded = False
        if result.status == nlp.STATUS_INFEASIBLE:
            # feasibility reset: horizons back to the maximum widens both
            # terminal sets to the joint limits; a passed waypoint stays passed
            hs.n_split = 0 if (self.sequence.single or hs.n_split == 0) else p.n_max
            hs.n_horizon = p.n_max
            xs_guess, us_guess = _fit_length(xs_guess, us_guess, p.n_max)
            result = self._solve(x_obs, u_obs, xs_guess, us_guess)
            if result.status == nlp.STATUS_INFEASIBLE:
                degraded = True
                xs, us = self._anytime_fallback(x_obs, u_obs)
            else:
                xs, us = result.xs, result.us
        else:
            xs, us = result.xs, result.us

        self.prev_xs, self.prev_us = xs, us

        record = TraceRecord(
            n=self.iteration,
            n_split=hs.n_split,
            n_horizon=hs.n_horizon,
            cursor=self.sequence.cursor,
            q_w=q_w.copy(),
            q_g=q_g.copy(),
            w1=self.w1,
            w2=self.w2,
            xs=xs.copy(),
            us=us.copy(),
            status="degraded" if degraded else result.status,
            solver_iterations=result.iterations,
            kkt_residual=result.kkt_residual,
            objective=result.objective,
            solve_time=result.solve_time,
            plan_time=time.perf_counter() - t_begin,
            min_distance=min_distance(self.world, x_obs[:m]),
            event_applied=self._event_applied,
            advanced=self._advanced,
        )
        self._event_applied = False
        self._advanced = False
        self.iteration += 1
        return StepResult(xs=xs, us=us, record=record)

    def _solve(self, x_obs, u_obs, xs_guess, us_guess) -> nlp.SolveResult:
        p = self.params
        hs = self.horizon
        sets = terminal_sets(
            hs, self.sequence.q_w, self.sequence.q_g, p.eps, p.bounds.q_lo, p.bounds.q_hi
        )
        cost_params = replace(p.costs, w1=self.w1, w2=self.w2)
        ctx = CostContext(params=cost_params, world=self.world, q_w=self.sequence.q_w, q_g=self.sequence.q_g)
        problem = nlp.assemble(
            self.mats, x_obs, u_obs, hs.n_split, hs.n_horizon,
            sets.waypoint_box, sets.goal_box, p.bounds, ctx,
        )
        warm = problem.join(xs_guess, us_guess)
        return nlp.solve(
            problem, warm_start=warm, tol=p.solver_tol,
            max_iter=p.solver_max_iter, time_budget=p.solver_time_budget,
        )

    def _anytime_fallback(self, x_obs, u_obs) -> tuple[np.ndarray, np.ndarray]:
        """Remainder of the previous plan, still valid by its steady terminal state."""
        m = self.params.model.m
        if self.prev_xs is not None and self.prev_xs.shape[0] > 2:
            xs = self.prev_xs[1:].copy()
            us = self.prev_us[1:].copy()
        else:
            hold = x_obs.copy()
            hold[m:] = 0.0
            xs = np.tile(hold, (2, 1))
            us = np.zeros((2, m))
        if xs.shape[0] < 2:
            xs, us = _fit_length(xs, us, 2)
        return xs, us

    def advance_waypoint(self) -> bool:
        """Re-pair after the waypoint is passed: old goal becomes the waypoint.

        Requires the split index to have reached zero. Returns False when no
        waypoints remain (the final pair stays active and the horizon simply
        shrinks onto the goal).
        """
        if self.horizon.n_split != 0:
            raise ValueError(f"waypoint not passed yet (split index {self.horizon.n_split})")
        if not self.sequence.can_advance:
            return False
        self.sequence.cursor += 1
        # time to the new waypoint inherits the horizon of the old goal
        self.horizon.n_split = self.horizon.n_horizon
        self.horizon.n_horizon = self.params.n_max
        q_now = self.prev_xs[1, : self.params.model.m] if self.prev_xs is not None else self.sequence.q_w
        self._recompute_weights(q_now)
        self._advanced = True
        return True

    # -- environment changes --------------------------------------------------

    def update_world(self, new_world: CollisionWorld) -> bool:
        """Adopt a new obstacle set; reset horizons when anything really moved."""
        changed = _world_changed(self.world, new_world, self.params.env_change_tol)
        self.world = new_world
        if changed:
            self._reset_after_change()
        return changed

    def update_sequence(self, points: list[np.ndarray], cursor: int | None = None) -> bool:
        """Replace the remaining waypoint sequence; reset when targets moved."""
        new_seq = WaypointSequence(points=list(points), cursor=self.sequence.cursor if cursor is None else cursor)
        tol = self.params.env_change_tol
        changed = (
            len(new_seq.points) != len(self.sequence.points)
            or new_seq.cursor != self.sequence.cursor
            or any(
                float(np.max(np.abs(a - b))) > tol
                for a, b in zip(new_seq.points, self.sequence.points)
            )
        )
        self.sequence = new_seq
        if changed:
            self._reset_after_change()
        return changed

    def _reset_after_change(self) -> None:
        p = self.params
        # a waypoint already passed (split at zero) stays passed; resurrecting
        # it would pull the trajectory backwards through the old target
        if self.sequence.single or self.horizon.n_split == 0:
            self.horizon.n_split = 0
        else:
            self.horizon.n_split = p.n_max
        self.horizon.n_horizon = p.n_max
        q_now = self.prev_xs[1, : p.model.m] if self.prev_xs is not None else None
        if q_now is not None:
            self._recompute_weights(q_now)
        self._event_applied = True


def _fit_length(xs: np.ndarray, us: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncate or pad (last state held, zero input) to the requested length."""
    have = xs.shape[0]
    if have == length:
        return xs, us
    if have > length:
        return xs[:length].copy(), us[:length].copy()
    pad_xs = np.tile(xs[-1], (length - have, 1))
    pad_us = np.zeros((length - have, us.shape[1]))
    return np.vstack([xs, pad_xs]), np.vstack([us, pad_us])


def _world_changed(old: CollisionWorld, new: CollisionWorld, tol: float) -> bool:
    if len(old.obstacles) != len(new.obstacles):
        return True
    for a, b in zip(old.obstacles, new.obstacles):
        if a.kind != b.kind:
            return True
        if a.kind == "sphere":
            if np.max(np.abs(np.subtract(a.center, b.center))) > tol or abs(a.radius - b.radius) > tol:
                return True
        elif a.kind == "capsule":
            if (
                np.max(np.abs(np.subtract(a.p0, b.p0))) > tol
                or np.max(np.abs(np.subtract(a.p1, b.p1))) > tol
                or abs(a.radius - b.radius) > tol
            ):
                return True
        else:
            if (
                np.max(np.abs(np.subtract(a.point, b.point))) > tol
                or np.max(np.abs(np.subtract(a.normal, b.normal))) > tol
            ):
                return True
    return False
