"""Central finite-difference checks for every analytic gradient family."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import collision as _collision
from . import costs as _costs
from .collision import CapsuleObstacle, CollisionWorld, HalfSpaceObstacle, PlanarArm, SphereObstacle, SphereSpec
from .costs import CostParams
from .model import ModelParams, State, foh_matrices
from .nlp import CostContext, StateBounds, assemble


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Two-sided difference quotient of a scalar function, one entry at a time."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        x_hi = x.copy()
        x_lo = x.copy()
        x_hi[i] += step
        x_lo[i] -= step
        grad[i] = (f(x_hi) - f(x_lo)) / (2.0 * step)
    return grad


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(analytic))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def _random_arm(rng: np.random.Generator, n_links: int | None = None) -> PlanarArm:
    if n_links is None:
        n_links = int(rng.integers(2, 4))
    lengths = tuple(float(v) for v in rng.uniform(0.25, 0.5, n_links))
    limits = tuple((-2.8, 2.8) for _ in range(n_links))
    spheres = []
    for link in range(n_links):
        for frac in (0.5, 1.0):
            spheres.append(SphereSpec(link=link, fraction=frac, radius=float(rng.uniform(0.03, 0.07))))
    return PlanarArm(link_lengths=lengths, joint_limits=limits, spheres=tuple(spheres))


def _random_world(rng: np.random.Generator, arm: PlanarArm) -> CollisionWorld:
    obstacles = []
    for _ in range(int(rng.integers(1, 4))):
        kind = rng.integers(0, 3)
        if kind == 0:
            obstacles.append(
                SphereObstacle(center=tuple(rng.uniform(-1.0, 1.0, 2)), radius=float(rng.uniform(0.05, 0.2)))
            )
        elif kind == 1:
            p0 = rng.uniform(-1.0, 1.0, 2)
            p1 = p0 + rng.uniform(-0.6, 0.6, 2)
            obstacles.append(
                CapsuleObstacle(p0=tuple(p0), p1=tuple(p1), radius=float(rng.uniform(0.05, 0.2)))
            )
        else:
            normal = rng.normal(size=2)
            normal /= np.linalg.norm(normal)
            point = rng.uniform(-1.2, -0.8) * normal  # keep the wall away from the base
            obstacles.append(HalfSpaceObstacle(point=tuple(point), normal=tuple(normal)))
    return CollisionWorld(arm=arm, obstacles=tuple(obstacles))


def _near_kink(world: CollisionWorld, q: np.ndarray) -> bool:
    """Finite differences misbehave where the distance field loses smoothness."""
    for center, _, _ in _collision.fk_points(world.arm, q):
        for ob in world.obstacles:
            d_point, _ = ob.point_distance(center)
            surface_offset = ob.radius if hasattr(ob, "radius") else 0.0
            if abs(d_point + surface_offset) < 1e-3:  # near the center line / axis
                return True
    return False


def check_smooth_l1(rng: np.random.Generator, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        m = int(rng.integers(1, 5))
        q = rng.uniform(-2.0, 2.0, m)
        q_ref = rng.uniform(-2.0, 2.0, m)
        gamma = float(rng.uniform(0.02, 0.5))
        analytic = _costs.smooth_l1_grad(q, q_ref, gamma)
        numeric = central_difference(lambda v: _costs.smooth_l1_cost(v, q_ref, gamma), q)
        worst = max(worst, _rel_error(analytic, numeric))
    return worst


def check_fk_jacobians(rng: np.random.Generator, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        arm = _random_arm(rng)
        q = rng.uniform(-2.0, 2.0, arm.m)
        points = _collision.fk_points(arm, q)
        for s, (center, _, jac) in enumerate(points):
            for axis in range(2):
                numeric = central_difference(
                    lambda v, s=s, axis=axis: _collision.fk_points(arm, v)[s][0][axis], q
                )
                worst = max(worst, _rel_error(jac[axis], numeric))
    return worst


def check_collision_chain(rng: np.random.Generator, count: int) -> float:
    params = CostParams()
    worst = 0.0
    done = 0
    while done < count:
        arm = _random_arm(rng)
        world = _random_world(rng, arm)
        q = rng.uniform(-2.0, 2.0, arm.m)
        if _near_kink(world, q):
            continue
        _, analytic = _collision.l_col(world, q, params)
        numeric = central_difference(lambda v: _collision.l_col(world, v, params)[0], q)
        worst = max(worst, _rel_error(analytic, numeric))
        done += 1
    return worst


def check_total_objective(rng: np.random.Generator, count: int) -> float:
    worst = 0.0
    done = 0
    while done < count:
        m = int(rng.integers(2, 4))
        n = int(rng.integers(3, 8))
        n_split = int(rng.integers(0, n + 1))
        arm = _random_arm(rng, n_links=m)
        world = _random_world(rng, arm)
        mats = foh_matrices(ModelParams(m=m, h=0.1))
        params = CostParams(w1=float(rng.uniform(0.5, 20)), w2=float(rng.uniform(0.5, 20)))
        ctx = CostContext(params=params, world=world, q_w=rng.uniform(-1, 1, m), q_g=rng.uniform(-1, 1, m))
        bounds = StateBounds(
            q_lo=np.full(m, -3.0), q_hi=np.full(m, 3.0),
            qdot_max=np.full(m, 10.0), qddot_max=np.full(m, 50.0),
        )
        problem = assemble(
            mats, State.rest(np.zeros(m)).stacked(), np.zeros(m), n_split, n,
            (bounds.q_lo, bounds.q_hi), (bounds.q_lo, bounds.q_hi), bounds, ctx,
        )
        z = rng.uniform(-1.0, 1.0, problem.n_dec)
        xs, _ = problem.split(z)
        if any(_near_kink(world, xs[k, :m]) for k in range(n)):
            continue
        _, analytic, _ = problem.evaluate(z, 1)
        numeric = central_difference(lambda v: problem.evaluate(v, 0)[0], z)
        worst = max(worst, _rel_error(analytic, numeric))
        done += 1
    return worst


@dataclass
class GradReport:
    families: dict[str, float]
    tolerance: float = 1e-5

    @property
    def ok(self) -> bool:
        return all(err <= self.tolerance for err in self.families.values())


def check_gradients(seed: int = 0, count: int = 100) -> GradReport:
    """Run every finite-difference family at the given sample count."""
    rng = np.random.default_rng(seed)
    families = {
        "smooth_l1": check_smooth_l1(rng, count),
        "fk_jacobian": check_fk_jacobians(rng, max(10, count // 5)),
        "collision_chain": check_collision_chain(rng, count),
        "total_objective": check_total_objective(rng, max(10, count // 5)),
    }
    return GradReport(families=families)
