"""Discrete-time triple-integrator joint model with first-order-hold inputs.

Each joint is modeled as a chain position -> velocity -> acceleration driven
by jerk. Inputs are piecewise linear between samples, which gives an exact
two-point (first-order-hold) discrete update shared by the planner, the
simulator and the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Joint count and sampling time of the discrete model."""

    m: int
    h: float

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"joint count must be >= 1, got {self.m}")
        if not self.h > 0.0:
            raise ValueError(f"sampling time must be > 0, got {self.h}")


@dataclass(frozen=True)
class State:
    """Stacked joint state, stored as [q; qdot; qddot] (all q first)."""

    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.q) == len(self.qdot) == len(self.qddot)):
            raise ValueError("q, qdot, qddot must have identical length")

    @property
    def m(self) -> int:
        return len(self.q)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot, self.qddot])

    @staticmethod
    def from_stacked(x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 3 != 0:
            raise ValueError(f"stacked state must be a vector of length 3m, got shape {x.shape}")
        m = x.size // 3
        return State(q=x[:m].copy(), qdot=x[m : 2 * m].copy(), qddot=x[2 * m :].copy())

    @staticmethod
    def rest(q: np.ndarray) -> "State":
        q = np.asarray(q, dtype=float)
        return State(q=q.copy(), qdot=np.zeros_like(q), qddot=np.zeros_like(q))


@dataclass(frozen=True)
class FohMatrices:
    """Transition and input matrices of the first-order-hold discretization.

    Phi = A kron I_m with A the 3x3 single-joint transition block, so the
    stacked order [q; qdot; qddot] is baked into the matrix layout.
    """

    m: int
    h: float
    Phi: np.ndarray
    Gamma1: np.ndarray
    Gamma2: np.ndarray


def foh_matrices(params: ModelParams) -> FohMatrices:
    """Build the discrete-time matrices for the given joint count and step."""
    h = params.h
    m = params.m
    A = np.array(
        [
            [1.0, h, h * h / 2.0],
            [0.0, 1.0, h],
            [0.0, 0.0, 1.0],
        ]
    )
    g1 = np.array([[h**3 / 8.0], [h * h / 3.0], [h / 2.0]])
    g2 = np.array([[h**3 / 24.0], [h * h / 6.0], [h / 2.0]])
    eye = np.eye(m)
    return FohMatrices(
        m=m,
        h=h,
        Phi=np.kron(A, eye),
        Gamma1=np.kron(g1, eye),
        Gamma2=np.kron(g2, eye),
    )


def step(x_k: np.ndarray, u_k: np.ndarray, u_k1: np.ndarray, mats: FohMatrices) -> np.ndarray:
    """One exact update x_{k+1} = Phi x_k + Gamma1 u_k + Gamma2 u_{k+1}.

    Accepts and returns stacked state vectors of length 3m.
    """
    x_k = np.asarray(x_k, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    u_k1 = np.asarray(u_k1, dtype=float)
    m = mats.m
    if x_k.shape != (3 * m,):
        raise ValueError(f"state must have shape ({3 * m},), got {x_k.shape}")
    if u_k.shape != (m,) or u_k1.shape != (m,):
        raise ValueError(f"inputs must have shape ({m},), got {u_k.shape} and {u_k1.shape}")
    return mats.Phi @ x_k + mats.Gamma1 @ u_k + mats.Gamma2 @ u_k1


def rollout(x0: np.ndarray, inputs: np.ndarray, mats: FohMatrices) -> np.ndarray:
    """Repeated application of the update: ``inputs`` (N, m) -> states (N, 3m).

    The returned trajectory starts at x0 and has zero dynamics defect by
    construction.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != mats.m:
        raise ValueError(f"inputs must have shape (N, {mats.m}), got {inputs.shape}")
    n = inputs.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 input samples, got {n}")
    xs = np.empty((n, 3 * mats.m))
    xs[0] = np.asarray(x0, dtype=float)
    for k in range(n - 1):
        xs[k + 1] = step(xs[k], inputs[k], inputs[k + 1], mats)
    return xs


def dynamics_defect(xs: np.ndarray, us: np.ndarray, mats: FohMatrices) -> float:
    """Max-norm violation of the update equation along a trajectory."""
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    worst = 0.0
    for k in range(xs.shape[0] - 1):
        defect = xs[k + 1] - step(xs[k], us[k], us[k + 1], mats)
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst
