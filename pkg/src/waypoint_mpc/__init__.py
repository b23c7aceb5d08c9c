"""Waypoint model-predictive trajectory optimization with online replanning."""

from .collision import (
    CapsuleObstacle,
    CollisionWorld,
    HalfSpaceObstacle,
    PlanarArm,
    SphereObstacle,
    SphereSpec,
    fk_points,
    l_col,
    min_distance,
    signed_distance,
)
from .costs import (
    CostParams,
    collision_penalty,
    segment_weights,
    smooth_l1_cost,
    smooth_l1_grad,
    total_objective,
)
from .harness import (
    Metrics,
    Scenario,
    ScenarioError,
    compute_metrics,
    load_scenario,
    replay,
    run_closed_loop,
)
from .model import FohMatrices, ModelParams, State, foh_matrices, rollout, step
from .nlp import NlpProblem, SolveResult, StateBounds, assemble, kkt_residual, solve
from .planner import (
    HorizonState,
    IkError,
    Planner,
    PlannerParams,
    TerminalSets,
    WaypointSequence,
    check_goal_reachability,
    inverse_kinematics_planar,
    terminal_sets,
)
from .trace import Trace, TraceRecord, export_trace, load_trace

__version__ = "0.1.0"
