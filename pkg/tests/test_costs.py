import math

import numpy as np
import pytest

from waypoint_mpc.collision import CollisionWorld, PlanarArm, SphereObstacle, SphereSpec
from waypoint_mpc.costs import (
    CostParams,
    collision_penalty,
    collision_penalty_curvature,
    collision_penalty_grad,
    segment_weights,
    smooth_l1_cost,
    smooth_l1_grad,
    total_objective,
)
from waypoint_mpc.model import ModelParams, foh_matrices, rollout




def test_smooth_l1_zero_at_reference():
    q = np.array([0.3, -1.2, 0.5])
    assert smooth_l1_cost(q, q, 0.1) == pytest.approx(0.0, abs=1e-15)


def test_smooth_l1_scalar_value():
    assert smooth_l1_cost(np.array([1.0]), np.array([0.0]), 0.1) == pytest.approx(
        math.sqrt(1.01) - 0.1
    )
    assert smooth_l1_cost(np.array([1.0]), np.array([0.0]), 0.1) == pytest.approx(0.9049876, abs=1e-7)


def test_smooth_l1_approaches_l1():
    q = np.array([3.0, -2.0])
    r = np.zeros(2)
    for gamma in (1e-3, 1e-5):
        assert smooth_l1_cost(q, r, gamma) == pytest.approx(5.0, abs=2 * gamma * 2)


def test_smooth_l1_sandwich_property():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(1, 6))
        q = rng.uniform(-3, 3, m)
        r = rng.uniform(-3, 3, m)
        gamma = float(rng.uniform(1e-4, 0.5))
        value = smooth_l1_cost(q, r, gamma)
        l1 = float(np.sum(np.abs(q - r)))
        assert l1 - m * gamma - 1e-12 <= value <= l1 + 1e-12


def test_smooth_l1_grad_values():
    np.testing.assert_allclose(smooth_l1_grad(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.1), 0.0)
    g = smooth_l1_grad(np.array([0.1]), np.array([0.0]), 0.1)
    assert g[0] == pytest.approx(0.1 / math.sqrt(0.02))
    assert g[0] == pytest.approx(0.7071068, abs=1e-7)


def test_smooth_l1_grad_bounded_and_matches_fd():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m = int(rng.integers(1, 5))
        q = rng.uniform(-2, 2, m)
        r = rng.uniform(-2, 2, m)
        gamma = float(rng.uniform(0.01, 0.5))
        g = smooth_l1_grad(q, r, gamma)
        assert np.all(np.abs(g) < 1.0)
        fd = np.zeros(m)
        for i in range(m):
            h = 1e-6
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            fd[i] = (smooth_l1_cost(qp, r, gamma) - smooth_l1_cost(qm, r, gamma)) / (2 * h)
        assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))) < 1e-6


def test_smooth_l1_shape_mismatch():
    with pytest.raises(ValueError):
        smooth_l1_cost(np.zeros(2), np.zeros(3), 0.1)
    with pytest.raises(ValueError):
        smooth_l1_grad(np.zeros(2), np.zeros(3), 0.1)


def test_segment_weights_table_values():
    q0 = np.zeros(2)
    q_w = np.array([2.0, 0.0])
    q_g = np.array([4.0, 0.0])
    w1, w2 = segment_weights(q0, q_w, q_g, sigma=20.0, d_min=0.01)
    assert w1 == pytest.approx(10.0)
    assert w2 == pytest.approx(10.0)


def test_segment_weights_clamp():
    q = np.array([1.0, 1.0])
    _, w2 = segment_weights(np.zeros(2), q, q, sigma=20.0, d_min=0.01)
    assert w2 == pytest.approx(2000.0)


def test_segment_weights_symmetry():
    q0 = np.zeros(3)
    q_w = np.array([1.0, 0.0, 0.0])
    q_g = np.array([2.0, 0.0, 0.0])
    w1, w2 = segment_weights(q0, q_w, q_g, 20.0, 0.01)
    assert w1 == pytest.approx(w2)


def test_collision_penalty_at_minus_beta():
    alpha, beta = 1000.0, 0.001
    assert collision_penalty(-beta, alpha, beta) == pytest.approx(math.log(2) / alpha)
    assert collision_penalty(-beta, alpha, beta) == pytest.approx(6.9315e-4, abs=1e-8)


def test_collision_penalty_stable_form():
    alpha, beta = 1000.0, 0.001
    value = collision_penalty(-0.01, alpha, beta)
    assert value == pytest.approx((9.0 + math.log1p(math.exp(-9.0))) / 1000.0)
    assert value == pytest.approx(9.000123e-3, abs=1e-9)


def test_collision_penalty_far_no_overflow():
    alpha, beta = 1000.0, 0.001
    value = collision_penalty(0.1, alpha, beta)
    assert 0.0 <= value < 1e-40
    # deep penetration must not overflow either
    deep = collision_penalty(-2.0, alpha, beta)
    assert np.isfinite(deep)
    assert deep == pytest.approx(2.0 - beta, rel=1e-6)


def test_collision_penalty_monotone_decreasing_and_positive():
    d = np.linspace(-0.5, 0.5, 201)
    values = collision_penalty(d, 1000.0, 0.001)
    assert np.all(values > 0.0)
    assert np.all(np.diff(values) < 0.0)


def test_collision_penalty_convex_in_distance():
    d = np.linspace(-0.02, 0.02, 401)
    values = collision_penalty(d, 1000.0, 0.001)
    second = np.diff(values, 2)
    assert np.min(second) >= -1e-12


def test_collision_penalty_grad_matches_fd():
    rng = np.random.default_rng(2)
    for _ in range(100):
        d = float(rng.uniform(-0.05, 0.05))
        alpha = float(rng.uniform(100, 2000))
        beta = float(rng.uniform(1e-4, 1e-2))
        g = collision_penalty_grad(d, alpha, beta)
        h = 1e-8
        fd = (collision_penalty(d + h, alpha, beta) - collision_penalty(d - h, alpha, beta)) / (2 * h)
        assert g == pytest.approx(fd, rel=1e-5, abs=1e-10)
        assert collision_penalty_curvature(d, alpha, beta) >= 0.0


def _objective_fixture():
    m = 2
    mats = foh_matrices(ModelParams(m=m, h=0.1))
    arm = PlanarArm(
        link_lengths=(0.5, 0.4),
        joint_limits=((-3.0, 3.0), (-3.0, 3.0)),
        spheres=(SphereSpec(1, 1.0, 0.05),),
    )
    return mats, arm


def test_total_objective_summation_bounds():
    mats, arm = _objective_fixture()
    params = CostParams(w1=3.0, w2=5.0, w3=0.0)
    rng = np.random.default_rng(3)
    n = 6
    us = rng.normal(size=(n, 2)) * 0.1
    xs = rollout(np.zeros(6), us, mats)
    q_w = np.array([0.4, 0.1])
    q_g = np.array([0.8, -0.2])

    full = total_objective(xs, us, n, n, params, None, q_w, q_g)
    # pre-split: no goal term at all
    manual = sum(params.w1 * smooth_l1_cost(xs[k, :2], q_w, params.gamma) for k in range(n))
    manual += sum(float(us[k] @ us[k]) for k in range(n))
    assert full == pytest.approx(manual)

    zero_split = total_objective(xs, us, 0, n, params, None, q_w, q_g)
    manual2 = sum(params.w2 * smooth_l1_cost(xs[k, :2], q_g, params.gamma) for k in range(n))
    manual2 += sum(float(us[k] @ us[k]) for k in range(n))
    assert zero_split == pytest.approx(manual2)


def test_total_objective_resting_at_goal_is_zero():
    mats, arm = _objective_fixture()
    params = CostParams(w1=1.0, w2=1.0, w3=100.0)
    q_g = np.array([0.5, -0.3])
    xs = np.tile(np.concatenate([q_g, np.zeros(4)]), (4, 1))
    us = np.zeros((4, 2))
    world = CollisionWorld(arm=arm, obstacles=())
    assert total_objective(xs, us, 0, 4, params, world, q_g, q_g) == pytest.approx(0.0, abs=1e-15)


def test_total_objective_obstacle_relabeling_invariance():
    mats, arm = _objective_fixture()
    params = CostParams(w1=2.0, w2=2.0, w3=100.0)
    rng = np.random.default_rng(4)
    us = rng.normal(size=(5, 2)) * 0.2
    xs = rollout(np.concatenate([[0.2, 0.1], np.zeros(4)]), us, mats)
    obstacles = (
        SphereObstacle(center=(0.7, 0.1), radius=0.1),
        SphereObstacle(center=(0.2, -0.4), radius=0.15),
        SphereObstacle(center=(-0.3, 0.5), radius=0.08),
    )
    w1 = CollisionWorld(arm=arm, obstacles=obstacles)
    w2 = CollisionWorld(arm=arm, obstacles=obstacles[::-1])
    q_w = np.array([0.5, 0.2])
    q_g = np.array([0.9, -0.1])
    a = total_objective(xs, us, 2, 5, params, w1, q_w, q_g)
    b = total_objective(xs, us, 2, 5, params, w2, q_w, q_g)
    assert a == pytest.approx(b, rel=1e-14)


def test_total_objective_bounds_validation():
    mats, _ = _objective_fixture()
    xs = np.zeros((4, 6))
    us = np.zeros((4, 2))
    with pytest.raises(ValueError):
        total_objective(xs, us, 5, 4, CostParams(), None, np.zeros(2), np.zeros(2))


def test_cost_params_validation():
    with pytest.raises(ValueError):
        CostParams(gamma=0.0)
    with pytest.raises(ValueError):
        CostParams(w3=-1.0)
    with pytest.raises(ValueError):
        CostParams(d_min=-0.1)
