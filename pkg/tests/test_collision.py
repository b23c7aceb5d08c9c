import math

import numpy as np
import pytest

from waypoint_mpc.collision import (
    CapsuleObstacle,
    CollisionWorld,
    HalfSpaceObstacle,
    PlanarArm,
    SphereObstacle,
    SphereSpec,
    fk_points,
    l_col,
    min_distance,
    pairwise_distances,
    signed_distance,
)
from waypoint_mpc.costs import CostParams


def two_link(spheres=None):
    if spheres is None:
        spheres = (SphereSpec(link=1, fraction=1.0, radius=0.05),)
    return PlanarArm(
        link_lengths=(1.0, 1.0),
        joint_limits=((-3.1, 3.1), (-3.1, 3.1)),
        spheres=tuple(spheres),
    )


def test_fk_straight_arm():
    arm = two_link()
    (center, radius, _), = fk_points(arm, np.zeros(2))
    np.testing.assert_allclose(center, [2.0, 0.0], atol=1e-15)
    assert radius == 0.05


def test_fk_rotated_arm():
    arm = two_link()
    (center, _, _), = fk_points(arm, np.array([math.pi / 2, 0.0]))
    np.testing.assert_allclose(center, [0.0, 2.0], atol=1e-15)


def test_fk_mid_link_sphere():
    arm = two_link(spheres=(SphereSpec(link=0, fraction=0.5, radius=0.1),))
    (center, _, _), = fk_points(arm, np.array([math.pi / 2, 1.0]))
    np.testing.assert_allclose(center, [0.0, 0.5], atol=1e-15)


def test_fk_jacobians_match_fd():
    rng = np.random.default_rng(5)
    arm = PlanarArm(
        link_lengths=(0.5, 0.4, 0.3),
        joint_limits=((-3.0, 3.0),) * 3,
        spheres=(SphereSpec(0, 0.7, 0.05), SphereSpec(1, 1.0, 0.05), SphereSpec(2, 0.3, 0.04)),
    )
    for _ in range(30):
        q = rng.uniform(-2.0, 2.0, 3)
        points = fk_points(arm, q)
        for s in range(len(points)):
            _, _, jac = points[s]
            fd = np.zeros((2, 3))
            for i in range(3):
                h = 1e-7
                qp, qm = q.copy(), q.copy()
                qp[i] += h
                qm[i] -= h
                fd[:, i] = (fk_points(arm, qp)[s][0] - fk_points(arm, qm)[s][0]) / (2 * h)
            assert np.max(np.abs(jac - fd)) < 1e-6


def test_sphere_sphere_distance():
    ob = SphereObstacle(center=(0.0, 0.0), radius=0.1)
    d, grad = signed_distance(ob, (np.array([0.5, 0.0]), 0.1))
    assert d == pytest.approx(0.3)
    np.testing.assert_allclose(grad, [1.0, 0.0])


def test_capsule_axis_interior_degenerate():
    ob = CapsuleObstacle(p0=(0.0, 0.0), p1=(1.0, 0.0), radius=0.2)
    d, grad = signed_distance(ob, (np.array([0.5, 0.0]), 0.1))
    assert d == pytest.approx(-0.3)
    np.testing.assert_allclose(grad, [0.0, 0.0])


def test_capsule_beyond_end_equals_cap_sphere():
    rng = np.random.default_rng(6)
    ob = CapsuleObstacle(p0=(0.0, 0.0), p1=(1.0, 0.0), radius=0.15)
    cap = SphereObstacle(center=(1.0, 0.0), radius=0.15)
    for _ in range(50):
        p = np.array([1.0, 0.0]) + rng.uniform(0.01, 1.0) * _unit(rng, max_angle=0.49 * math.pi)
        d_capsule, _ = signed_distance(ob, (p, 0.05))
        d_sphere, _ = signed_distance(cap, (p, 0.05))
        assert d_capsule == pytest.approx(d_sphere, abs=1e-12)


def _unit(rng, max_angle):
    angle = rng.uniform(-max_angle, max_angle)
    return np.array([math.cos(angle), math.sin(angle)])


def test_capsule_matches_dense_segment_sampling():
    rng = np.random.default_rng(7)
    ob = CapsuleObstacle(p0=(-0.3, 0.2), p1=(0.6, -0.4), radius=0.12)
    ts = np.linspace(0.0, 1.0, 20001)
    a = np.array(ob.p0)
    b = np.array(ob.p1)
    pts = a + ts[:, None] * (b - a)
    for _ in range(25):
        p = rng.uniform(-1.0, 1.0, 2)
        dense = float(np.min(np.linalg.norm(pts - p, axis=1))) - ob.radius - 0.05
        d, _ = signed_distance(ob, (p, 0.05))
        assert d == pytest.approx(dense, abs=1e-6)


def test_half_space_distance():
    ob = HalfSpaceObstacle(point=(0.0, -0.5), normal=(0.0, 1.0))
    d, grad = signed_distance(ob, (np.array([3.0, 0.5]), 0.1))
    assert d == pytest.approx(0.9)
    np.testing.assert_allclose(grad, [0.0, 1.0])
    with pytest.raises(ValueError):
        HalfSpaceObstacle(point=(0.0, 0.0), normal=(0.0, 2.0))


def test_distances_are_lipschitz_in_center():
    rng = np.random.default_rng(8)
    obstacles = [
        SphereObstacle(center=(0.1, -0.2), radius=0.2),
        CapsuleObstacle(p0=(-0.5, 0.0), p1=(0.5, 0.3), radius=0.15),
        HalfSpaceObstacle(point=(0.0, -1.0), normal=(0.0, 1.0)),
    ]
    for ob in obstacles:
        for _ in range(200):
            p1 = rng.uniform(-1.5, 1.5, 2)
            p2 = p1 + rng.normal(scale=0.1, size=2)
            d1, _ = signed_distance(ob, (p1, 0.05))
            d2, _ = signed_distance(ob, (p2, 0.05))
            assert abs(d1 - d2) <= np.linalg.norm(p1 - p2) + 1e-12


def test_l_col_empty_world():
    arm = two_link()
    world = CollisionWorld(arm=arm, obstacles=())
    value, grad = l_col(world, np.array([0.3, -0.2]), CostParams())
    assert value == 0.0
    np.testing.assert_array_equal(grad, np.zeros(2))


def test_l_col_far_obstacle_negligible():
    arm = two_link()
    world = CollisionWorld(arm=arm, obstacles=(SphereObstacle(center=(5.0, 5.0), radius=0.1),))
    value, grad = l_col(world, np.zeros(2), CostParams())
    assert value <= 1e-40
    assert np.max(np.abs(grad)) <= 1e-40


def test_l_col_gradient_matches_fd():
    rng = np.random.default_rng(9)
    arm = two_link(
        spheres=(SphereSpec(0, 1.0, 0.05), SphereSpec(1, 0.5, 0.05), SphereSpec(1, 1.0, 0.05))
    )
    world = CollisionWorld(
        arm=arm,
        obstacles=(
            SphereObstacle(center=(1.2, 0.4), radius=0.2),
            CapsuleObstacle(p0=(0.5, -0.8), p1=(1.0, -0.2), radius=0.15),
        ),
    )
    params = CostParams()
    checked = 0
    while checked < 30:
        q = rng.uniform(-2.0, 2.0, 2)
        raw = [abs(d) for d, _ in pairwise_distances(world, q)]
        if min(raw) < 1e-3:
            continue
        _, grad = l_col(world, q, params)
        fd = np.zeros(2)
        for i in range(2):
            h = 1e-6
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            fd[i] = (l_col(world, qp, params)[0] - l_col(world, qm, params)[0]) / (2 * h)
        assert np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(grad))) < 1e-5
        checked += 1


def test_l_col_nonnegative_and_monotone():
    arm = two_link()
    ob = SphereObstacle(center=(2.2, 0.0), radius=0.1)
    world = CollisionWorld(arm=arm, obstacles=(ob,))
    params = CostParams()
    # swinging away from the obstacle increases distance, decreases the cost
    values = []
    for q1 in np.linspace(0.0, 1.0, 11):
        value, _ = l_col(world, np.array([q1, 0.0]), params)
        assert value >= 0.0
        values.append(value)
    assert all(values[i + 1] <= values[i] for i in range(len(values) - 1))


def test_min_distance_empty_world_is_inf():
    arm = two_link()
    world = CollisionWorld(arm=arm, obstacles=())
    assert min_distance(world, np.zeros(2)) == math.inf


def test_min_distance_single_pair_and_permutation():
    arm = two_link()
    obstacles = (
        SphereObstacle(center=(2.5, 0.0), radius=0.1),
        SphereObstacle(center=(0.0, 2.5), radius=0.1),
    )
    w1 = CollisionWorld(arm=arm, obstacles=obstacles)
    w2 = CollisionWorld(arm=arm, obstacles=obstacles[::-1])
    q = np.array([0.2, 0.1])
    assert min_distance(w1, q) == pytest.approx(min_distance(w2, q))
    single = CollisionWorld(arm=arm, obstacles=obstacles[:1])
    d, _ = signed_distance(obstacles[0], fk_points(arm, q)[0][:2])
    assert min_distance(single, q) == pytest.approx(d)


def test_arm_validation():
    with pytest.raises(ValueError):
        PlanarArm(link_lengths=(1.0, -1.0), joint_limits=((-1, 1), (-1, 1)), spheres=())
    with pytest.raises(ValueError):
        PlanarArm(link_lengths=(1.0,), joint_limits=((1.0, -1.0),), spheres=())
    with pytest.raises(ValueError):
        SphereSpec(link=0, fraction=1.5, radius=0.1)
    with pytest.raises(ValueError):
        PlanarArm(
            link_lengths=(1.0,),
            joint_limits=((-1, 1),),
            spheres=(SphereSpec(link=2, fraction=0.5, radius=0.1),),
        )
