import numpy as np
import pytest

from waypoint_mpc.costs import CostParams
from waypoint_mpc.model import ModelParams, State, dynamics_defect, foh_matrices, rollout
from waypoint_mpc.nlp import (
    CostContext,
    StateBounds,
    assemble,
    kkt_residual,
    solve,
)


def make_problem(
    m=1,
    n=5,
    n_split=0,
    q_goal=1.0,
    eps=5e-4,
    qdot_max=10.0,
    qddot_max=50.0,
    w2=20.0,
    u_weight=1.0,
    x_init=None,
    goal_band=True,
):
    mats = foh_matrices(ModelParams(m=m, h=0.1))
    if x_init is None:
        x_init = State.rest(np.zeros(m)).stacked()
    q_g = np.full(m, q_goal)
    bounds = StateBounds(
        q_lo=np.full(m, -2.967),
        q_hi=np.full(m, 2.967),
        qdot_max=np.full(m, qdot_max),
        qddot_max=np.full(m, qddot_max),
    )
    goal_box = (q_g - eps, q_g + eps) if goal_band else (bounds.q_lo, bounds.q_hi)
    params = CostParams(w1=1.0, w2=w2, w3=100.0, u_weight=u_weight)
    ctx = CostContext(params=params, world=None, q_w=q_g, q_g=q_g)
    problem = assemble(
        mats, x_init, np.zeros(m), n_split, n,
        (bounds.q_lo, bounds.q_hi), goal_box, bounds, ctx,
    )
    return problem, mats


def test_assemble_dimension_counts():
    problem, _ = make_problem(m=1, n=5)
    assert problem.n_dec == 20
    assert problem.eq_row_counts == {"dynamics": 12, "initial": 4, "terminal": 3}


def test_assemble_rejects_bad_horizon():
    with pytest.raises(ValueError):
        make_problem(n=1)
    with pytest.raises(ValueError):
        make_problem(n=4, n_split=5)


def test_waypoint_box_inert_when_split_equals_horizon():
    # split index == horizon: the waypoint box argument covers the terminal
    # sample; passing the joint-limit box must leave the bounds untouched
    mats = foh_matrices(ModelParams(m=1, h=0.1))
    bounds = StateBounds(
        q_lo=np.array([-2.0]), q_hi=np.array([2.0]),
        qdot_max=np.array([5.0]), qddot_max=np.array([25.0]),
    )
    ctx = CostContext(params=CostParams(), world=None, q_w=np.zeros(1), q_g=np.zeros(1))
    problem = assemble(
        mats, State.rest(np.zeros(1)).stacked(), np.zeros(1), 5, 5,
        (bounds.q_lo, bounds.q_hi), (bounds.q_lo, bounds.q_hi), bounds, ctx,
    )
    o = 3 * 4  # q index of sample 4
    assert problem.lb[o] == -2.0
    assert problem.ub[o] == 2.0


def test_steady_goal_point_is_feasible():
    q_g = 0.7
    x_goal = State.rest(np.array([q_g])).stacked()
    problem, _ = make_problem(x_init=x_goal, q_goal=q_g)
    xs = np.tile(x_goal, (5, 1))
    us = np.zeros((5, 1))
    z = problem.join(xs, us)
    assert np.max(np.abs(problem.A @ z - problem.b)) <= 1e-12
    assert np.all(z >= problem.lb - 1e-12)
    assert np.all(z <= problem.ub + 1e-12)


def test_solve_resting_at_goal_fast():
    q_g = 0.7
    x_goal = State.rest(np.array([q_g])).stacked()
    problem, _ = make_problem(x_init=x_goal, q_goal=q_g)
    result = solve(problem)
    assert result.status == "converged"
    assert result.iterations <= 3
    assert result.objective == pytest.approx(0.0, abs=1e-10)


def test_solve_rest_to_rest_quality():
    problem, mats = make_problem()
    result = solve(problem, tol=1e-6)
    assert result.status == "converged"
    assert result.kkt_residual <= 1e-6
    # trajectory re-rolls exactly through the dynamics
    rolled = rollout(result.xs[0], result.us, mats)
    assert np.max(np.abs(rolled - result.xs)) <= 1e-10
    assert dynamics_defect(result.xs, result.us, mats) <= 1e-10
    # terminal sample inside the goal band
    assert abs(result.xs[-1, 0] - 1.0) <= 5e-4 + 1e-9
    assert np.max(np.abs(result.xs[-1, 1:])) <= 1e-9


def test_contradictory_bounds_reported_infeasible():
    mats = foh_matrices(ModelParams(m=1, h=0.1))
    bounds = StateBounds(
        q_lo=np.array([-2.0]), q_hi=np.array([2.0]),
        qdot_max=np.array([5.0]), qddot_max=np.array([25.0]),
    )
    ctx = CostContext(params=CostParams(), world=None, q_w=np.zeros(1), q_g=np.zeros(1))
    problem = assemble(
        mats, State.rest(np.zeros(1)).stacked(), np.zeros(1), 0, 5,
        (bounds.q_lo, bounds.q_hi), (np.array([1.0]), np.array([0.5])), bounds, ctx,
    )
    assert problem.bounds_infeasible
    assert solve(problem).status == "infeasible"


def test_unreachable_terminal_band_is_infeasible():
    # two samples, initial rest pinned at zero: the terminal state is fully
    # determined and cannot sit inside a band around 1
    problem, _ = make_problem(n=2, q_goal=1.0)
    result = solve(problem)
    assert result.status == "infeasible"


def test_monotone_descent_from_feasible_start():
    problem, _ = make_problem(goal_band=False)
    result = solve(problem)
    assert result.status == "converged"
    history = result.objective_history
    for earlier, later in zip(history, history[1:]):
        assert later <= earlier + 1e-9 * (1.0 + abs(earlier))


def test_warm_resolve_converges_immediately():
    problem, _ = make_problem()
    first = solve(problem)
    assert first.status == "converged"
    again = solve(problem, warm_start=first.z)
    assert again.status == "converged"
    assert again.iterations <= 2
    np.testing.assert_allclose(again.z, first.z, atol=1e-7)


def test_uniform_weight_scaling_preserves_argmin():
    base, _ = make_problem(w2=20.0, u_weight=1.0)
    doubled, _ = make_problem(w2=40.0, u_weight=2.0)
    res_a = solve(base, tol=1e-6)
    res_b = solve(doubled, tol=1e-6)
    assert res_a.status == res_b.status == "converged"
    assert np.max(np.abs(res_a.z - res_b.z)) <= 1e-6
    assert res_b.objective == pytest.approx(2.0 * res_a.objective, rel=1e-8)


def test_kkt_residual_behaviour():
    problem, _ = make_problem()
    result = solve(problem, tol=1e-6)
    multipliers = (result.eq_multipliers, result.bound_multipliers)
    assert kkt_residual(problem, result.z, multipliers) <= 1e-6

    perturbed = result.z.copy()
    perturbed[5] += 1e-2
    assert kkt_residual(problem, perturbed, multipliers) > 1e-6


def test_feasible_non_optimal_point_flags_stationarity():
    problem, mats = make_problem(goal_band=False)
    # roll arbitrary inputs that return to rest: feasible, not optimal
    us = np.zeros((5, 1))
    us[1, 0] = 4.0
    us[2, 0] = -8.0
    us[3, 0] = 4.0
    xs = rollout(problem.x_init, us, mats)
    assert np.max(np.abs(xs[-1, 1:])) <= 1e-12
    z = problem.join(xs, us)
    zero = (np.zeros(problem.A.shape[0]), np.zeros(problem.n_dec))
    primal = float(np.max(np.abs(problem.A @ z - problem.b)))
    assert primal <= 1e-9
    assert kkt_residual(problem, z, zero) > 1e-6


def test_time_budget_returns_best_iterate():
    problem, mats = make_problem(m=1, n=20)
    result = solve(problem, time_budget=1e-9)
    assert result.status in ("max_iter", "converged")
    assert dynamics_defect(result.xs, result.us, mats) <= 1e-8
