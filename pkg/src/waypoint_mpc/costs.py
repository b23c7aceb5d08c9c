"""Objective terms of the planner: smoothed 1-norm cost-to-go, segment
weights, and the softplus collision penalty, all with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostParams:
    """Static weights and shaping parameters of the objective.

    w1/w2 are placeholders here; the planner recomputes them per segment from
    the segment lengths. u_weight scales the squared-jerk term (1.0 matches
    the nominal objective) and exists so uniform cost rescaling is expressible.
    """

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 100.0
    gamma: float = 0.1
    sigma: float = 20.0
    d_min: float = 0.01
    alpha: float = 1000.0
    beta: float = 0.001
    u_weight: float = 1.0

    def __post_init__(self) -> None:
        for name in ("gamma", "sigma", "d_min", "alpha", "beta", "u_weight"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("w1", "w2", "w3"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


def smooth_l1_cost(q: np.ndarray, q_ref: np.ndarray, gamma: float) -> float:
    """Smoothed 1-norm distance sum_i sqrt((q_i - r_i)^2 + gamma^2) - gamma.

    Zero exactly at q == q_ref and within [ ||q-r||_1 - m*gamma, ||q-r||_1 ]
    everywhere.
    """
    q = np.asarray(q, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    if q.shape != q_ref.shape:
        raise ValueError(f"shape mismatch: {q.shape} vs {q_ref.shape}")
    e = q - q_ref
    return float(np.sum(np.sqrt(e * e + gamma * gamma) - gamma))


def smooth_l1_grad(q: np.ndarray, q_ref: np.ndarray, gamma: float) -> np.ndarray:
    """Gradient of smooth_l1_cost w.r.t. q; each component lies in (-1, 1)."""
    q = np.asarray(q, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    if q.shape != q_ref.shape:
        raise ValueError(f"shape mismatch: {q.shape} vs {q_ref.shape}")
    e = q - q_ref
    return e / np.sqrt(e * e + gamma * gamma)


def smooth_l1_curvature(q: np.ndarray, q_ref: np.ndarray, gamma: float) -> np.ndarray:
    """Diagonal of the (exact, positive) Hessian of smooth_l1_cost."""
    e = np.asarray(q, dtype=float) - np.asarray(q_ref, dtype=float)
    s = np.sqrt(e * e + gamma * gamma)
    return gamma * gamma / (s * s * s)


def segment_weights(
    q_init: np.ndarray,
    q_w: np.ndarray,
    q_g: np.ndarray,
    sigma: float,
    d_min: float,
) -> tuple[float, float]:
    """Cost-to-go weights, inversely proportional to the segment lengths.

    Short segments get large weights so similar distances take similar time.
    d_min clamps the denominators away from zero.
    """
    q_init = np.asarray(q_init, dtype=float)
    q_w = np.asarray(q_w, dtype=float)
    q_g = np.asarray(q_g, dtype=float)
    if not (q_init.shape == q_w.shape == q_g.shape):
        raise ValueError("q_init, q_w, q_g must have identical shape")
    w1 = sigma / max(float(np.linalg.norm(q_w - q_init)), d_min)
    w2 = sigma / max(float(np.linalg.norm(q_g - q_w)), d_min)
    return w1, w2


def collision_penalty(d, alpha: float, beta: float):
    """Softplus barrier (1/alpha) * log(1 + exp(-alpha*(d + beta))).

    Evaluated in shifted-stable form: with alpha ~ 1000 the naive expression
    overflows for penetrations beyond ~0.7. Accepts scalars or arrays.
    """
    z = -alpha * (np.asarray(d, dtype=float) + beta)
    out = (np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))) / alpha
    return float(out) if out.ndim == 0 else out


def collision_penalty_grad(d, alpha: float, beta: float):
    """d(penalty)/dd = -sigmoid(-alpha*(d + beta)), computed overflow-safely."""
    z = np.atleast_1d(-alpha * (np.asarray(d, dtype=float) + beta))
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = -1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = -ez / (1.0 + ez)
    return float(out[0]) if np.asarray(d).ndim == 0 else out


def collision_penalty_curvature(d, alpha: float, beta: float):
    """Second derivative alpha * s * (1 - s) with s the sigmoid above; >= 0."""
    s = -collision_penalty_grad(d, alpha, beta)
    return alpha * s * (1.0 - s)


def total_objective(
    xs: np.ndarray,
    us: np.ndarray,
    n_split: int,
    n_horizon: int,
    params: CostParams,
    world,
    q_w: np.ndarray,
    q_g: np.ndarray,
) -> float:
    """Full objective over a horizon.

    w1 * sum_{k<n_split} l1 + w2 * sum_{n_split<=k<n_horizon} l2
    + sum_k (u_weight*||u_k||^2 + w3*l_col), with empty sums contributing zero.
    ``world`` may be None for obstacle-free evaluation.
    """
    from . import collision as _collision

    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    if not 0 <= n_split <= n_horizon:
        raise ValueError(f"need 0 <= n_split <= n_horizon, got {n_split}, {n_horizon}")
    if xs.shape[0] != n_horizon or us.shape[0] != n_horizon:
        raise ValueError("trajectory length must equal n_horizon")
    m = us.shape[1]
    total = 0.0
    for k in range(n_split):
        total += params.w1 * smooth_l1_cost(xs[k, :m], q_w, params.gamma)
    for k in range(n_split, n_horizon):
        total += params.w2 * smooth_l1_cost(xs[k, :m], q_g, params.gamma)
    for k in range(n_horizon):
        total += params.u_weight * float(us[k] @ us[k])
        if world is not None and len(world.obstacles) > 0 and params.w3 > 0.0:
            value, _ = _collision.l_col(world, xs[k, :m], params)
            total += params.w3 * value
    return total
