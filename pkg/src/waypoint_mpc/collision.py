"""Planar demo-arm kinematics, primitive signed distances with gradients,
and the aggregate collision cost over all obstacle/robot-sphere pairs.

The robot collision model is a set of spheres pinned to the links at given
arc-length fractions. Obstacles are spheres, capsules, or half-spaces, which
keeps every pairwise signed distance analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import CostParams, collision_penalty, collision_penalty_curvature, collision_penalty_grad


@dataclass(frozen=True)
class SphereSpec:
    """A collision sphere at ``fraction`` of the way along link ``link``."""

    link: int
    fraction: float
    radius: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {self.fraction}")
        if not self.radius > 0.0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class PlanarArm:
    """Serial planar arm with one revolute joint per link."""

    link_lengths: tuple[float, ...]
    joint_limits: tuple[tuple[float, float], ...]
    spheres: tuple[SphereSpec, ...]

    def __post_init__(self) -> None:
        if any(length <= 0.0 for length in self.link_lengths):
            raise ValueError("link lengths must be > 0")
        if len(self.joint_limits) != len(self.link_lengths):
            raise ValueError("need one joint-limit pair per link")
        if any(lo >= hi for lo, hi in self.joint_limits):
            raise ValueError("joint limits must satisfy lower < upper")
        for spec in self.spheres:
            if not 0 <= spec.link < len(self.link_lengths):
                raise ValueError(f"sphere references link {spec.link} of {len(self.link_lengths)}")

    @property
    def m(self) -> int:
        return len(self.link_lengths)

    def limit_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([limit[0] for limit in self.joint_limits])
        hi = np.array([limit[1] for limit in self.joint_limits])
        return lo, hi


@dataclass(frozen=True)
class SphereObstacle:
    center: tuple[float, float]
    radius: float

    kind = "sphere"

    def point_distance(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        """Distance from a point to the obstacle surface and its gradient."""
        delta = p - np.asarray(self.center)
        dist = float(np.linalg.norm(delta))
        if dist < 1e-12:
            return -self.radius, np.zeros(2)
        return dist - self.radius, delta / dist

    def point_distance_batch(self, ps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        delta = ps - np.asarray(self.center)
        dist = np.linalg.norm(delta, axis=1)
        safe = np.maximum(dist, 1e-12)
        return dist - self.radius, delta / safe[:, None]


@dataclass(frozen=True)
class CapsuleObstacle:
    p0: tuple[float, float]
    p1: tuple[float, float]
    radius: float

    kind = "capsule"

    def point_distance(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        a = np.asarray(self.p0, dtype=float)
        b = np.asarray(self.p1, dtype=float)
        axis = b - a
        denom = float(axis @ axis)
        t = 0.0 if denom < 1e-16 else float(np.clip((p - a) @ axis / denom, 0.0, 1.0))
        delta = p - (a + t * axis)
        dist = float(np.linalg.norm(delta))
        if dist < 1e-12:
            # point exactly on the axis: maximum penetration, no unique gradient
            return -self.radius, np.zeros(2)
        return dist - self.radius, delta / dist

    def point_distance_batch(self, ps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(self.p0, dtype=float)
        b = np.asarray(self.p1, dtype=float)
        axis = b - a
        denom = float(axis @ axis)
        if denom < 1e-16:
            t = np.zeros(ps.shape[0])
        else:
            t = np.clip((ps - a) @ axis / denom, 0.0, 1.0)
        delta = ps - (a + t[:, None] * axis)
        dist = np.linalg.norm(delta, axis=1)
        safe = np.maximum(dist, 1e-12)
        return dist - self.radius, delta / safe[:, None]


@dataclass(frozen=True)
class HalfSpaceObstacle:
    """Solid region behind a boundary point, normal pointing into free space."""

    point: tuple[float, float]
    normal: tuple[float, float]

    kind = "half_space"

    def __post_init__(self) -> None:
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"normal must be unit length, got norm {n}")

    def point_distance(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        n = np.asarray(self.normal, dtype=float)
        return float(n @ (p - np.asarray(self.point))), n.copy()

    def point_distance_batch(self, ps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = np.asarray(self.normal, dtype=float)
        return (ps - np.asarray(self.point)) @ n, np.tile(n, (ps.shape[0], 1))


Obstacle = SphereObstacle | CapsuleObstacle | HalfSpaceObstacle


@dataclass(frozen=True)
class CollisionWorld:
    """Obstacle set plus robot sphere model; a new value per environment change."""

    arm: PlanarArm
    obstacles: tuple[Obstacle, ...] = field(default_factory=tuple)


def fk_points(arm: PlanarArm, q: np.ndarray) -> list[tuple[np.ndarray, float, np.ndarray]]:
    """Sphere centers, radii and exact 2 x m Jacobians under planar FK."""
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.m,):
        raise ValueError(f"expected {arm.m} joint angles, got shape {q.shape}")
    centers, _, jacs = _fk_batch(arm, q[None, :])
    return [(centers[0, s], arm.spheres[s].radius, jacs[0, s]) for s in range(len(arm.spheres))]


def _fk_batch(arm: PlanarArm, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized FK for a batch of configurations.

    Returns centers (K, S, 2), radii (S,), jacobians (K, S, 2, m) for the
    S spheres of the arm across K configurations.
    """
    qs = np.asarray(qs, dtype=float)
    n_cfg, m = qs.shape
    lengths = np.asarray(arm.link_lengths)
    theta = np.cumsum(qs, axis=1)                       # (K, m) absolute link angles
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=2)      # (K, m, 2)
    perps = np.stack([-np.sin(theta), np.cos(theta)], axis=2)    # (K, m, 2)
    seg = lengths[None, :, None] * dirs                 # (K, m, 2) link vectors
    tang = lengths[None, :, None] * perps               # (K, m, 2) their angle derivatives

    # prefix sums with a leading zero: joints[l] = position of joint l
    joints = np.zeros((n_cfg, m + 1, 2))
    joints[:, 1:] = np.cumsum(seg, axis=1)
    tang_prefix = np.zeros((n_cfg, m + 1, 2))
    tang_prefix[:, 1:] = np.cumsum(tang, axis=1)

    n_sph = len(arm.spheres)
    centers = np.zeros((n_cfg, n_sph, 2))
    radii = np.zeros(n_sph)
    jacs = np.zeros((n_cfg, n_sph, 2, m))
    for s, spec in enumerate(arm.spheres):
        link = spec.link
        partial = spec.fraction * lengths[link]
        centers[:, s] = joints[:, link] + partial * dirs[:, link]
        radii[s] = spec.radius
        # d(center)/dq_i = sum_{i <= j < link} tang_j + fraction * tang_link, zero past the link
        tail = partial * perps[:, link]                  # (K, 2)
        for i in range(link + 1):
            jacs[:, s, :, i] = (tang_prefix[:, link] - tang_prefix[:, i]) + tail
    return centers, radii, jacs


def signed_distance(obstacle: Obstacle, sphere: tuple[np.ndarray, float]) -> tuple[float, np.ndarray]:
    """Signed distance between an obstacle and a robot sphere.

    Negative values are penetration depth. The gradient is taken w.r.t. the
    sphere center.
    """
    center, radius = sphere
    d_point, grad = obstacle.point_distance(np.asarray(center, dtype=float))
    return d_point - radius, grad


def pairwise_distances(world: CollisionWorld, q: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Signed distance and configuration-space gradient for every pair."""
    out = []
    for center, radius, jac in fk_points(world.arm, q):
        for obstacle in world.obstacles:
            d, grad_center = signed_distance(obstacle, (center, radius))
            out.append((d, grad_center @ jac))
    return out


def l_col(world: CollisionWorld, q: np.ndarray, params: CostParams) -> tuple[float, np.ndarray]:
    """Aggregate collision penalty over all pairs, with its gradient."""
    q = np.asarray(q, dtype=float)
    value = 0.0
    grad = np.zeros_like(q)
    for d, dgrad in pairwise_distances(world, q):
        value += collision_penalty(d, params.alpha, params.beta)
        grad += collision_penalty_grad(d, params.alpha, params.beta) * dgrad
    return value, grad


def l_col_batch(
    world: CollisionWorld, qs: np.ndarray, params: CostParams, with_curvature: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Penalty value, gradient and optional Gauss-Newton block per configuration.

    Values (K,), gradients (K, m), curvature (K, m, m) built from
    phi'' * (d d/dq)(d d/dq)^T, dropping the distance's own second derivative.
    """
    qs = np.asarray(qs, dtype=float)
    n_cfg, m = qs.shape
    values = np.zeros(n_cfg)
    grads = np.zeros((n_cfg, m))
    curv = np.zeros((n_cfg, m, m)) if with_curvature else None
    if not world.obstacles or not world.arm.spheres:
        return values, grads, curv
    centers, radii, jacs = _fk_batch(world.arm, qs)
    for s in range(len(world.arm.spheres)):
        for obstacle in world.obstacles:
            d_point, grad_center = obstacle.point_distance_batch(centers[:, s])
            d = d_point - radii[s]
            # chain rule through the FK jacobian per configuration
            dgrad_q = np.einsum("kc,kcm->km", grad_center, jacs[:, s])
            values += collision_penalty(d, params.alpha, params.beta)
            phi_d = collision_penalty_grad(d, params.alpha, params.beta)
            grads += phi_d[:, None] * dgrad_q
            if with_curvature:
                phi_dd = collision_penalty_curvature(d, params.alpha, params.beta)
                curv += phi_dd[:, None, None] * (dgrad_q[:, :, None] * dgrad_q[:, None, :])
    return values, grads, curv


def min_distance(world: CollisionWorld, q: np.ndarray) -> float:
    """Smallest pairwise signed distance; +inf when there are no pairs."""
    distances = [d for d, _ in pairwise_distances(world, q)]
    return min(distances) if distances else math.inf
