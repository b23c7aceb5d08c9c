"""Independent reference implementations used as test oracles.

These deliberately share no code with the solver paths they check: the
rest-to-rest reference assembles its own equality system from the two-point
update formulas, parametrizes the feasible set by an SVD null basis with the
box folded into an exact interval, and runs projected gradient on that
parametrization; the reachability oracle is a literal loop transcription.
"""

from __future__ import annotations

import math

import numpy as np


def rest_to_rest_reference(
    h: float,
    n: int,
    q_goal: float,
    eps: float,
    q_limit: float,
    qdot_max: float,
    qddot_max: float,
    w2: float,
    gamma: float,
    u_weight: float = 1.0,
    stat_tol: float = 1e-10,
    max_iter: int = 500000,
):
    """Projected-gradient solve of the single-joint rest-to-rest program.

    Decision layout [x_0..x_{n-1} (q, qdot, qddot each), u_0..u_{n-1}], the
    same convention the solver documents, so solutions compare entrywise.
    Returns (z, objective, stationarity).
    """
    dim = 4 * n
    g1 = np.array([h**3 / 8.0, h**2 / 3.0, h / 2.0])
    g2 = np.array([h**3 / 24.0, h**2 / 6.0, h / 2.0])
    phi = np.array([[1.0, h, h * h / 2.0], [0.0, 1.0, h], [0.0, 0.0, 1.0]])

    rows = []
    rhs = []

    def x_index(k):
        return 3 * k

    def u_index(k):
        return 3 * n + k

    for k in range(n - 1):
        for r in range(3):
            row = np.zeros(dim)
            row[x_index(k + 1) + r] = 1.0
            row[x_index(k) : x_index(k) + 3] -= phi[r]
            row[u_index(k)] -= g1[r]
            row[u_index(k + 1)] -= g2[r]
            rows.append(row)
            rhs.append(0.0)
    for r in range(3):  # x_0 = rest at zero
        row = np.zeros(dim)
        row[x_index(0) + r] = 1.0
        rows.append(row)
        rhs.append(0.0)
    row = np.zeros(dim)  # u_0 = 0
    row[u_index(0)] = 1.0
    rows.append(row)
    rhs.append(0.0)
    for r in (1, 2):  # terminal velocity and acceleration zero
        row = np.zeros(dim)
        row[x_index(n - 1) + r] = 1.0
        rows.append(row)
        rhs.append(0.0)
    row = np.zeros(dim)  # final input zero
    row[u_index(n - 1)] = 1.0
    rows.append(row)
    rhs.append(0.0)

    A = np.array(rows)
    b = np.array(rhs)

    z_particular, *_ = np.linalg.lstsq(A, b, rcond=None)
    _, singular, vt = np.linalg.svd(A)
    rank = int(np.sum(singular > max(A.shape) * np.finfo(float).eps * singular[0]))
    null = vt[rank:].T
    if null.shape[1] != 1:
        raise AssertionError(f"expected a one-dimensional feasible set, got {null.shape[1]}")
    direction = null[:, 0]

    lb = np.full(dim, -np.inf)
    ub = np.full(dim, np.inf)
    for k in range(1, n):  # sample 0 pinned by the equalities
        lb[x_index(k)] = -q_limit
        ub[x_index(k)] = q_limit
        lb[x_index(k) + 1] = -qdot_max
        ub[x_index(k) + 1] = qdot_max
        lb[x_index(k) + 2] = -qddot_max
        ub[x_index(k) + 2] = qddot_max
    lb[x_index(n - 1)] = max(lb[x_index(n - 1)], q_goal - eps)
    ub[x_index(n - 1)] = min(ub[x_index(n - 1)], q_goal + eps)

    # fold the box into an exact interval for the single free parameter
    t_lo, t_hi = -np.inf, np.inf
    for i in range(dim):
        d = direction[i]
        if abs(d) < 1e-14:
            if not (lb[i] - 1e-9 <= z_particular[i] <= ub[i] + 1e-9):
                raise AssertionError("reference problem infeasible")
            continue
        low = (lb[i] - z_particular[i]) / d
        high = (ub[i] - z_particular[i]) / d
        if d < 0:
            low, high = high, low
        t_lo = max(t_lo, low)
        t_hi = min(t_hi, high)
    if t_lo > t_hi:
        raise AssertionError("reference feasible interval empty")

    def objective(tau: float) -> float:
        z = z_particular + tau * direction
        total = 0.0
        for k in range(n):
            e = z[x_index(k)] - q_goal
            total += w2 * (math.sqrt(e * e + gamma * gamma) - gamma)
            total += u_weight * z[u_index(k)] ** 2
        return total

    def gradient(tau: float) -> float:
        z = z_particular + tau * direction
        g = 0.0
        for k in range(n):
            e = z[x_index(k)] - q_goal
            g += w2 * e / math.sqrt(e * e + gamma * gamma) * direction[x_index(k)]
            g += 2.0 * u_weight * z[u_index(k)] * direction[u_index(k)]
        return g

    tau = min(max(0.0, t_lo), t_hi)
    curvature = w2 / gamma * float(np.sum(direction[: 3 * n : 3] ** 2)) + 2.0 * u_weight * float(
        np.sum(direction[3 * n :] ** 2)
    )
    step = 1.0 / max(curvature, 1e-12)
    converged = False
    stationarity = np.inf
    for _ in range(max_iter):
        g = gradient(tau)
        tau_next = min(max(tau - step * g, t_lo), t_hi)
        while objective(tau_next) > objective(tau) + 1e-15 * (1.0 + abs(objective(tau))):
            step *= 0.5
            tau_next = min(max(tau - step * g, t_lo), t_hi)
        stationarity = abs(tau - tau_next) / step
        tau = tau_next
        if stationarity <= stat_tol * max(1.0, abs(g)):
            converged = True
            break
    if not converged:
        raise AssertionError(f"reference did not reach {stat_tol:g} stationarity ({stationarity:.2e})")
    return z_particular + tau * direction, objective(tau), stationarity


def sign(value: float) -> float:
    return 1.0 if value >= 0.0 else -1.0


def reachability_oracle(n_start, n_stop, q_target, full_traj, eps):
    """Literal loop transcription of the reachability scan over a full
    trajectory indexed globally from zero."""
    m = len(q_target)
    reached = [0] * m
    i = n_start
    for i in range(n_start, n_stop):
        for j in range(m):
            d = full_traj[i][j] - q_target[j]
            if abs(d) < eps:
                reached[j] = 1
            if i > 0:
                if sign(d) != sign(full_traj[i - 1][j] - q_target[j]):
                    reached[j] = 1
        if all(flag == 1 for flag in reached):
            return i
    return i + 1
