"""Scenario ingestion, closed-loop simulation with timed events, metrics,
and trace persistence/replay.

The simulation executes the planner's own model: the state advances to the
second sample of each solved horizon, which is the planner-level ground
truth and keeps every run exactly reproducible.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .collision import (
    CapsuleObstacle,
    CollisionWorld,
    HalfSpaceObstacle,
    PlanarArm,
    SphereObstacle,
    SphereSpec,
)
from .costs import CostParams
from .model import ModelParams, foh_matrices, rollout
from .nlp import StateBounds
from .planner import (
    HorizonState,
    IkError,
    Planner,
    inverse_kinematics_planar,
    terminal_sets,
)
from .trace import Trace, TraceRecord, export_trace, load_trace

# nominal planning parameters; scenario files override individual entries
DEFAULT_PARAMS: dict[str, float] = {
    "h": 0.1,
    "N_max": 20,
    "eps": 0.0005,
    "gamma": 0.1,
    "alpha": 1000.0,
    "beta": 0.001,
    "sigma": 20.0,
    "d_min": 0.01,
    "w3": 100.0,
}

# per-joint limits of the reference 7-axis arm; demo robots take the first m
JOINT_LIMIT_DEG = [170.0, 120.0, 170.0, 120.0, 170.0, 120.0, 175.0]
VELOCITY_LIMIT_DEG = [85.0, 85.0, 100.0, 75.0, 130.0, 135.0, 135.0]
ACCELERATION_LIMIT = [5.0] * 7

EVENT_ACTIONS = ("move_obstacle", "move_waypoint", "move_goal", "insert_waypoint", "remove_waypoint")


class ScenarioError(ValueError):
    """Scenario rejected; ``code`` distinguishes the failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class Event:
    t: float
    action: str
    payload: dict[str, Any]


@dataclass
class Scenario:
    robot: PlanarArm
    world: CollisionWorld
    start: np.ndarray
    waypoints: list[np.ndarray]
    params: "PlannerParamsBundle"
    events: list[Event]
    raw: dict[str, Any]


@dataclass
class PlannerParamsBundle:
    """Resolved planner/cost/bound parameters for a scenario."""

    model: ModelParams
    costs: CostParams
    bounds: StateBounds
    n_max: int
    eps: float
    min_horizon_first: int
    min_horizon_final: int
    solver_tol: float
    solver_max_iter: int
    solver_time_budget: float | None
    env_change_tol: float

    def planner_params(self):
        from .planner import PlannerParams

        return PlannerParams(
            model=self.model,
            costs=self.costs,
            bounds=self.bounds,
            n_max=self.n_max,
            eps=self.eps,
            min_horizon_first=self.min_horizon_first,
            min_horizon_final=self.min_horizon_final,
            solver_tol=self.solver_tol,
            solver_max_iter=self.solver_max_iter,
            solver_time_budget=self.solver_time_budget,
            env_change_tol=self.env_change_tol,
        )


@dataclass
class Metrics:
    path_length: float
    trajectory_duration: float
    planning_time_max: float
    planning_time_avg: float
    waypoint_pass_errors: list[float]
    min_clearance: float
    iterations: int
    failed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "path_length": self.path_length,
            "trajectory_duration": self.trajectory_duration,
            "planning_time_max": self.planning_time_max,
            "planning_time_avg": self.planning_time_avg,
            "waypoint_pass_errors": self.waypoint_pass_errors,
            "min_clearance": None if math.isinf(self.min_clearance) else self.min_clearance,
            "iterations": self.iterations,
            "failed": self.failed,
        }


def default_state_bounds(m: int) -> StateBounds:
    if m > len(JOINT_LIMIT_DEG):
        raise ScenarioError("schema", f"default limits cover up to {len(JOINT_LIMIT_DEG)} joints, got {m}")
    deg = np.pi / 180.0
    q_hi = np.array(JOINT_LIMIT_DEG[:m]) * deg
    qdot = np.array(VELOCITY_LIMIT_DEG[:m]) * deg
    qddot = np.array(ACCELERATION_LIMIT[:m], dtype=float)
    return StateBounds(q_lo=-q_hi, q_hi=q_hi, qdot_max=qdot, qddot_max=qddot)


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError("schema", f"unknown keys {sorted(unknown)} in {where}")
    missing = required - set(obj)
    if missing:
        raise ScenarioError("schema", f"missing keys {sorted(missing)} in {where}")


def _vector(value, length: int | None, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError("schema", f"{where} is not numeric") from exc
    if arr.ndim != 1 or (length is not None and arr.size != length):
        raise ScenarioError("schema", f"{where} must be a vector of length {length}")
    return arr


def obstacle_from_dict(data: dict, where: str = "obstacle"):
    if not isinstance(data, dict) or "kind" not in data:
        raise ScenarioError("schema", f"{where} needs a 'kind'")
    kind = data["kind"]
    try:
        if kind == "sphere":
            _require_keys(data, {"kind", "center", "radius"}, {"center", "radius"}, where)
            return SphereObstacle(center=tuple(_vector(data["center"], 2, where)), radius=float(data["radius"]))
        if kind == "capsule":
            _require_keys(data, {"kind", "p0", "p1", "radius"}, {"p0", "p1", "radius"}, where)
            return CapsuleObstacle(
                p0=tuple(_vector(data["p0"], 2, where)),
                p1=tuple(_vector(data["p1"], 2, where)),
                radius=float(data["radius"]),
            )
        if kind == "half_space":
            _require_keys(data, {"kind", "point", "normal"}, {"point", "normal"}, where)
            return HalfSpaceObstacle(
                point=tuple(_vector(data["point"], 2, where)),
                normal=tuple(_vector(data["normal"], 2, where)),
            )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("schema", f"{where}: {exc}") from exc
    raise ScenarioError("schema", f"{where} has unknown kind {kind!r}")


def obstacle_to_dict(obstacle) -> dict:
    if obstacle.kind == "sphere":
        return {"kind": "sphere", "center": list(obstacle.center), "radius": obstacle.radius}
    if obstacle.kind == "capsule":
        return {"kind": "capsule", "p0": list(obstacle.p0), "p1": list(obstacle.p1), "radius": obstacle.radius}
    return {"kind": "half_space", "point": list(obstacle.point), "normal": list(obstacle.normal)}


def load_scenario(document: dict[str, Any]) -> Scenario:
    """Validate a scenario document and resolve every target to joint space.

    Raises ScenarioError with code "schema" for structural problems, "ik"
    when a Cartesian target cannot be reached, and "start" when the initial
    configuration violates the joint limits.
    """
    if not isinstance(document, dict):
        raise ScenarioError("schema", "scenario must be a JSON object")
    _require_keys(
        document,
        {"robot", "world", "start", "waypoints", "params", "events"},
        {"robot", "start", "waypoints"},
        "scenario",
    )

    robot_doc = document["robot"]
    _require_keys(robot_doc, {"link_lengths", "joint_limits", "spheres"}, {"link_lengths"}, "robot")
    lengths = tuple(float(v) for v in robot_doc["link_lengths"])
    m = len(lengths)
    if "joint_limits" in robot_doc:
        limits = tuple((float(lo), float(hi)) for lo, hi in robot_doc["joint_limits"])
        if len(limits) != m:
            raise ScenarioError("schema", "joint_limits must match link count")
    else:
        bounds_default = default_state_bounds(m)
        limits = tuple((float(lo), float(hi)) for lo, hi in zip(bounds_default.q_lo, bounds_default.q_hi))
    spheres = []
    for i, sp in enumerate(robot_doc.get("spheres", [])):
        _require_keys(sp, {"link", "fraction", "radius"}, {"link", "fraction", "radius"}, f"spheres[{i}]")
        spheres.append(SphereSpec(link=int(sp["link"]), fraction=float(sp["fraction"]), radius=float(sp["radius"])))
    try:
        arm = PlanarArm(link_lengths=lengths, joint_limits=limits, spheres=tuple(spheres))
    except ValueError as exc:
        raise ScenarioError("schema", f"robot: {exc}") from exc

    obstacles = tuple(
        obstacle_from_dict(ob, f"world[{i}]") for i, ob in enumerate(document.get("world", []))
    )
    world = CollisionWorld(arm=arm, obstacles=obstacles)

    params = _resolve_params(document.get("params", {}), arm)

    start = _vector(document["start"], m, "start")
    if np.any(start < params.bounds.q_lo - 1e-12) or np.any(start > params.bounds.q_hi + 1e-12):
        raise ScenarioError("start_out_of_limits", "start configuration violates the joint limits")

    waypoint_docs = document["waypoints"]
    if not isinstance(waypoint_docs, list) or not waypoint_docs:
        raise ScenarioError("schema", "waypoints must be a non-empty list")
    waypoints: list[np.ndarray] = []
    q_prev = start
    for i, wp in enumerate(waypoint_docs):
        waypoints.append(_resolve_target(wp, arm, q_prev, f"waypoints[{i}]"))
        q_prev = waypoints[-1]

    events = []
    for i, ev in enumerate(document.get("events", [])):
        _require_keys(ev, {"t", "action", "payload"}, {"t", "action"}, f"events[{i}]")
        action = ev["action"]
        if action not in EVENT_ACTIONS:
            raise ScenarioError("schema", f"events[{i}] has unknown action {action!r}")
        payload = ev.get("payload", {})
        if not isinstance(payload, dict):
            raise ScenarioError("schema", f"events[{i}] payload must be an object")
        _validate_event_payload(action, payload, arm, i)
        events.append(Event(t=float(ev["t"]), action=action, payload=payload))
    events.sort(key=lambda e: e.t)

    return Scenario(
        robot=arm, world=world, start=start, waypoints=waypoints,
        params=params, events=events, raw=document,
    )


def _resolve_target(doc: dict, arm: PlanarArm, q_prev: np.ndarray, where: str) -> np.ndarray:
    if not isinstance(doc, dict) or ("joint" in doc) == ("cartesian" in doc):
        raise ScenarioError("schema", f"{where} needs exactly one of 'joint' or 'cartesian'")
    if "joint" in doc:
        _require_keys(doc, {"joint"}, {"joint"}, where)
        q = _vector(doc["joint"], arm.m, where)
        lo, hi = arm.limit_arrays()
        if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
            raise ScenarioError("schema", f"{where} violates the joint limits")
        return q
    _require_keys(doc, {"cartesian"}, {"cartesian"}, where)
    target = _vector(doc["cartesian"], 2, where)
    try:
        return inverse_kinematics_planar(target, arm, q_prev)
    except IkError as exc:
        raise ScenarioError("ik", f"{where}: {exc}") from exc


def _validate_event_payload(action: str, payload: dict, arm: PlanarArm, index: int) -> None:
    where = f"events[{index}].payload"
    if action == "move_obstacle":
        _require_keys(payload, {"index", "center", "p0", "p1", "point", "normal", "radius"}, {"index"}, where)
    elif action in ("move_waypoint", "insert_waypoint"):
        _require_keys(payload, {"index", "joint", "cartesian"}, {"index"}, where)
        if ("joint" in payload) == ("cartesian" in payload):
            raise ScenarioError("schema", f"{where} needs exactly one of 'joint' or 'cartesian'")
    elif action == "move_goal":
        _require_keys(payload, {"joint", "cartesian"}, set(), where)
        if ("joint" in payload) == ("cartesian" in payload):
            raise ScenarioError("schema", f"{where} needs exactly one of 'joint' or 'cartesian'")
    elif action == "remove_waypoint":
        _require_keys(payload, {"index"}, {"index"}, where)


def _resolve_params(doc: dict, arm: PlanarArm) -> PlannerParamsBundle:
    allowed = {
        "h", "N_max", "eps", "gamma", "alpha", "beta", "sigma", "d_min", "w3", "u_weight",
        "qdot_max", "qddot_max", "u_max", "min_horizon_first", "min_horizon_final",
        "solver_tol", "solver_max_iter", "solver_time_budget", "env_change_tol",
    }
    _require_keys(doc, allowed, set(), "params")
    merged = {**DEFAULT_PARAMS, **{k: doc[k] for k in doc if k in DEFAULT_PARAMS}}
    m = arm.m

    defaults = default_state_bounds(m) if m <= len(JOINT_LIMIT_DEG) else None
    q_lo, q_hi = arm.limit_arrays()
    qdot = _vector(doc["qdot_max"], m, "params.qdot_max") if "qdot_max" in doc else (
        defaults.qdot_max if defaults else None
    )
    qddot = _vector(doc["qddot_max"], m, "params.qddot_max") if "qddot_max" in doc else (
        defaults.qddot_max if defaults else None
    )
    if qdot is None or qddot is None:
        raise ScenarioError("schema", "qdot_max/qddot_max required for robots beyond the default table")
    u_max = _vector(doc["u_max"], m, "params.u_max") if "u_max" in doc else None
    bounds = StateBounds(q_lo=q_lo, q_hi=q_hi, qdot_max=qdot, qddot_max=qddot, u_max=u_max)

    try:
        model = ModelParams(m=m, h=float(merged["h"]))
        costs = CostParams(
            w3=float(merged["w3"]),
            gamma=float(merged["gamma"]),
            sigma=float(merged["sigma"]),
            d_min=float(merged["d_min"]),
            alpha=float(merged["alpha"]),
            beta=float(merged["beta"]),
            u_weight=float(doc.get("u_weight", 1.0)),
        )
    except ValueError as exc:
        raise ScenarioError("schema", f"params: {exc}") from exc

    budget = doc.get("solver_time_budget", 0.08)
    return PlannerParamsBundle(
        model=model,
        costs=costs,
        bounds=bounds,
        n_max=int(merged["N_max"]),
        eps=float(merged["eps"]),
        min_horizon_first=int(doc.get("min_horizon_first", 5)),
        min_horizon_final=int(doc.get("min_horizon_final", 2)),
        solver_tol=float(doc.get("solver_tol", 1e-6)),
        solver_max_iter=int(doc.get("solver_max_iter", 100)),
        solver_time_budget=None if budget in (None, 0) else float(budget),
        env_change_tol=float(doc.get("env_change_tol", 1e-3)),
    )


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------


def apply_event(planner: Planner, event: Event, arm: PlanarArm) -> bool:
    """Apply one event between iterations; returns False when skipped."""
    q_now = planner.prev_xs[1, : arm.m] if planner.prev_xs is not None else planner.sequence.q_w

    def resolve(payload: dict) -> np.ndarray:
        if "joint" in payload:
            return np.asarray(payload["joint"], dtype=float)
        return inverse_kinematics_planar(np.asarray(payload["cartesian"], dtype=float), arm, q_now)

    try:
        if event.action == "move_obstacle":
            index = int(event.payload["index"])
            obstacles = list(planner.world.obstacles)
            if not 0 <= index < len(obstacles):
                warnings.warn(f"move_obstacle index {index} out of range; skipped")
                return False
            obstacles[index] = _moved_obstacle(obstacles[index], event.payload)
            planner.update_world(CollisionWorld(arm=arm, obstacles=tuple(obstacles)))
            return True

        points = [p.copy() for p in planner.sequence.points]
        if event.action == "move_goal":
            points[-1] = resolve(event.payload)
        elif event.action == "move_waypoint":
            index = int(event.payload["index"])
            if not 0 <= index < len(points):
                warnings.warn(f"move_waypoint index {index} out of range; skipped")
                return False
            points[index] = resolve(event.payload)
        elif event.action == "insert_waypoint":
            index = int(event.payload["index"])
            if not planner.sequence.cursor < index <= len(points) - 1:
                warnings.warn(f"insert_waypoint index {index} not in the remaining sequence; skipped")
                return False
            points.insert(index, resolve(event.payload))
        elif event.action == "remove_waypoint":
            index = int(event.payload["index"])
            if not planner.sequence.cursor < index < len(points) - 1:
                warnings.warn(f"remove_waypoint index {index} is not a pending waypoint; skipped")
                return False
            points.pop(index)
        planner.update_sequence(points)
        return True
    except IkError as exc:
        warnings.warn(f"{event.action} target unreachable ({exc}); event skipped")
        return False


def _moved_obstacle(obstacle, payload: dict):
    from dataclasses import replace as dc_replace

    updates = {}
    if obstacle.kind == "sphere":
        if "center" in payload:
            updates["center"] = tuple(float(v) for v in payload["center"])
    elif obstacle.kind == "capsule":
        if "p0" in payload:
            updates["p0"] = tuple(float(v) for v in payload["p0"])
        if "p1" in payload:
            updates["p1"] = tuple(float(v) for v in payload["p1"])
    else:
        if "point" in payload:
            updates["point"] = tuple(float(v) for v in payload["point"])
        if "normal" in payload:
            updates["normal"] = tuple(float(v) for v in payload["normal"])
    if "radius" in payload and obstacle.kind in ("sphere", "capsule"):
        updates["radius"] = float(payload["radius"])
    return dc_replace(obstacle, **updates)


def trace_header(scenario: Scenario) -> dict[str, Any]:
    p = scenario.params
    return {
        "version": 1,
        "m": p.model.m,
        "h": p.model.h,
        "n_max": p.n_max,
        "eps": p.eps,
        "q_lo": p.bounds.q_lo.tolist(),
        "q_hi": p.bounds.q_hi.tolist(),
        "qdot_max": p.bounds.qdot_max.tolist(),
        "qddot_max": p.bounds.qddot_max.tolist(),
        "link_lengths": list(scenario.robot.link_lengths),
        "spheres": [
            {"link": s.link, "fraction": s.fraction, "radius": s.radius} for s in scenario.robot.spheres
        ],
        "world0": [obstacle_to_dict(ob) for ob in scenario.world.obstacles],
        "start": scenario.start.tolist(),
        "waypoints": [w.tolist() for w in scenario.waypoints],
    }


@dataclass
class ClosedLoopResult:
    trace: Trace
    metrics: Metrics
    planner: Planner
    terminated: bool


def run_closed_loop(
    scenario: Scenario,
    max_steps: int = 600,
    on_iteration: Callable[[TraceRecord, Planner], None] | None = None,
) -> ClosedLoopResult:
    """Simulate the planner against its own model until the goal is reached.

    Events apply atomically between iterations. Termination requires the
    final pair to be active, the position within the tolerance band, and a
    steady state.
    """
    p = scenario.params
    planner = Planner(p.planner_params(), scenario.world, scenario.waypoints)
    m = p.model.m
    x = np.concatenate([scenario.start, np.zeros(2 * m)])
    u = np.zeros(m)
    pending = list(scenario.events)
    records: list[TraceRecord] = []
    terminated = False

    for n in range(max_steps):
        t_now = n * p.model.h
        while pending and pending[0].t <= t_now + 1e-9:
            apply_event(planner, pending.pop(0), scenario.robot)

        step = planner.plan_step(x, u, new_goal=(n == 0))
        records.append(step.record)
        if on_iteration is not None:
            on_iteration(step.record, planner)

        x = step.xs[1].copy()
        u = step.us[1].copy()

        if planner.horizon.n_split == 0 and planner.sequence.can_advance:
            planner.advance_waypoint()

        if planner.sequence.on_final_pair and not pending:
            q_err = float(np.max(np.abs(x[:m] - planner.sequence.final_goal)))
            steady = float(np.max(np.abs(x[m:])))
            # the optimum may rest exactly on the band edge; allow for ulps
            if q_err <= p.eps + 1e-9 and steady <= 1e-8:
                terminated = True
                break

    trace = Trace(header=trace_header(scenario), records=records)
    metrics = compute_metrics(trace, terminated=terminated)
    return ClosedLoopResult(trace=trace, metrics=metrics, planner=planner, terminated=terminated)


def compute_metrics(trace: Trace, terminated: bool | None = None) -> Metrics:
    """Path length, duration, planning times and waypoint passage errors."""
    records = trace.records
    if not records:
        raise ValueError("empty trace")
    h = float(trace.header["h"])
    eps = float(trace.header["eps"])
    m = int(trace.header["m"])

    qs = np.array([r.xs[0][:m] for r in records])
    path_length = float(np.sum(np.linalg.norm(np.diff(qs, axis=0), axis=1))) if len(qs) > 1 else 0.0

    plan_times = np.array([r.plan_time for r in records])
    q_g_final = records[-1].q_g
    duration = len(records) * h
    reached = False
    # executed states plus the terminal state the loop stopped on
    executed = [(r.n, r.xs[0]) for r in records]
    executed.append((records[-1].n + 1, records[-1].xs[1]))
    for n, state in executed:
        if (
            float(np.max(np.abs(state[:m] - q_g_final))) <= eps + 1e-9
            and float(np.max(np.abs(state[m : 2 * m]))) <= 1e-6
        ):
            duration = n * h
            reached = True
            break

    # a waypoint is passed when the split index reaches the current sample;
    # record the error at the first such iteration of each pair
    pass_errors = []
    has_waypoints = len(trace.header.get("waypoints", [])) > 1
    if has_waypoints:
        seen: set[int] = set()
        for r in records:
            if r.cursor in seen or r.n_split > 1:
                continue
            seen.add(r.cursor)
            pass_errors.append(float(np.max(np.abs(r.xs[0][:m] - r.q_w))))

    clearances = [r.min_distance for r in records]
    min_clearance = min(clearances) if clearances else math.inf

    failed = not reached if terminated is None else not terminated
    return Metrics(
        path_length=path_length,
        trajectory_duration=duration,
        planning_time_max=float(np.max(plan_times)),
        planning_time_avg=float(np.mean(plan_times)),
        waypoint_pass_errors=pass_errors,
        min_clearance=min_clearance,
        iterations=len(records),
        failed=failed,
    )


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


@dataclass
class ReplayReport:
    ok: bool
    issues: list[str] = field(default_factory=list)
    max_defect: float = 0.0
    max_bound_violation: float = 0.0


def replay(trace: Trace) -> ReplayReport:
    """Re-check dynamics defects, box bounds, terminal sets, and chaining."""
    header = trace.header
    m = int(header["m"])
    mats = foh_matrices(ModelParams(m=m, h=float(header["h"])))
    n_max = int(header["n_max"])
    eps = float(header["eps"])
    q_lo = np.array(header["q_lo"])
    q_hi = np.array(header["q_hi"])
    qdot_max = np.array(header["qdot_max"])
    qddot_max = np.array(header["qddot_max"])

    report = ReplayReport(ok=True)

    def issue(text: str) -> None:
        report.ok = False
        report.issues.append(text)

    prev = None
    for r in trace.records:
        rolled = rollout(r.xs[0], r.us, mats)
        defect = float(np.max(np.abs(rolled - r.xs)))
        report.max_defect = max(report.max_defect, defect)
        if defect > 1e-8:
            issue(f"record {r.n}: dynamics defect {defect:.3e}")

        viol = 0.0
        for k in range(1, r.xs.shape[0]):  # sample 0 is pinned to the observation
            q, qd, qdd = r.xs[k, :m], r.xs[k, m : 2 * m], r.xs[k, 2 * m :]
            viol = max(
                viol,
                float(np.max(np.maximum(q_lo - q, 0.0))),
                float(np.max(np.maximum(q - q_hi, 0.0))),
                float(np.max(np.maximum(np.abs(qd) - qdot_max, 0.0))),
                float(np.max(np.maximum(np.abs(qdd) - qddot_max, 0.0))),
            )
        report.max_bound_violation = max(report.max_bound_violation, viol)
        if viol > 1e-9:
            issue(f"record {r.n}: state bound violation {viol:.3e}")

        if r.status in ("converged", "max_iter"):
            hs = HorizonState(n_split=r.n_split, n_horizon=r.n_horizon, n_max=n_max)
            sets = terminal_sets(hs, r.q_w, r.q_g, eps, q_lo, q_hi)
            if 1 <= r.n_split <= r.n_horizon:
                q_split = r.xs[r.n_split - 1, :m]
                if np.any(q_split < sets.waypoint_lo - 1e-9) or np.any(q_split > sets.waypoint_hi + 1e-9):
                    issue(f"record {r.n}: waypoint terminal box violated")
            q_end = r.xs[-1, :m]
            if np.any(q_end < sets.goal_lo - 1e-9) or np.any(q_end > sets.goal_hi + 1e-9):
                issue(f"record {r.n}: goal terminal box violated")
            steady = float(np.max(np.abs(r.xs[-1, m:])))
            if steady > 1e-8:
                issue(f"record {r.n}: terminal state not steady ({steady:.3e})")

        if prev is not None:
            if float(np.max(np.abs(r.xs[0] - prev.xs[1]))) > 1e-12:
                issue(f"record {r.n}: state chaining broken")
            if float(np.max(np.abs(r.us[0] - prev.us[1]))) > 1e-12:
                issue(f"record {r.n}: input chaining broken")
        prev = r

    return report


def run_and_export(scenario: Scenario, destination, max_steps: int = 600) -> ClosedLoopResult:
    result = run_closed_loop(scenario, max_steps=max_steps)
    export_trace(result.trace, destination)
    return result


__all__ = [
    "DEFAULT_PARAMS",
    "ClosedLoopResult",
    "Event",
    "Metrics",
    "ReplayReport",
    "Scenario",
    "ScenarioError",
    "apply_event",
    "compute_metrics",
    "default_state_bounds",
    "export_trace",
    "load_scenario",
    "load_trace",
    "obstacle_from_dict",
    "obstacle_to_dict",
    "replay",
    "run_and_export",
    "run_closed_loop",
    "trace_header",
]
