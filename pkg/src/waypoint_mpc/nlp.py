"""Assembly and solution of the horizon optimization problem.

The program has a smooth nonconvex objective (cost-to-go, squared jerk,
collision penalty) over a feasible set that is entirely linear: dynamics and
endpoint equalities plus per-variable box bounds. It is solved by sequential
quadratic programming with exact gradients and Gauss-Newton curvature. Each
quadratic subproblem is condensed onto the null space of the equality rows
(the equalities then hold exactly by construction) and the remaining
inequality QP is handled by an operator-splitting scheme with an exact
active-set polish, so converged solutions satisfy the constraints to
linear-solve precision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from . import collision as _collision
from .costs import CostParams
from .model import FohMatrices, rollout

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class StateBounds:
    """Per-joint box limits for positions, velocities and accelerations.

    u_max is None by default: jerk is regularized by the objective, so input
    bounds are disabled unless explicitly requested.
    """

    q_lo: np.ndarray
    q_hi: np.ndarray
    qdot_max: np.ndarray
    qddot_max: np.ndarray
    u_max: np.ndarray | None = None


@dataclass(frozen=True)
class CostContext:
    """Everything the objective needs besides the decision vector."""

    params: CostParams
    world: _collision.CollisionWorld | None
    q_w: np.ndarray
    q_g: np.ndarray


@dataclass(frozen=True)
class EqualityFactors:
    """Orthogonal factorization of the equality rows A (full row rank).

    A^T = Q1 R, null-space basis Z orthonormal, so p = Q1 R^-T r + Z y walks
    the affine feasible set exactly.
    """

    Q1: np.ndarray
    R1: np.ndarray
    Z: np.ndarray

    def particular(self, r: np.ndarray) -> np.ndarray:
        if self.R1.shape[0] == 0:
            return np.zeros(self.Z.shape[0])
        w = scipy.linalg.solve_triangular(self.R1.T, r, lower=True, check_finite=False)
        return self.Q1 @ w

    def eq_multipliers(self, residual_grad: np.ndarray) -> np.ndarray:
        """lambda with A^T lambda = -residual_grad in the least-squares sense."""
        if self.R1.shape[0] == 0:
            return np.zeros(0)
        w = self.Q1.T @ residual_grad
        return -scipy.linalg.solve_triangular(self.R1, w, lower=False, check_finite=False)


@dataclass
class NlpProblem:
    """Linearly-constrained smooth program over stacked states and inputs.

    Decision layout: z = [x_0 .. x_{N-1}, u_0 .. u_{N-1}] with states stored
    [q; qdot; qddot]. Equality rows are rank-reduced at assembly; dependent
    but consistent rows are dropped, inconsistent ones flag infeasibility.
    """

    n_dec: int
    m: int
    n_horizon: int
    n_split: int
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    evaluate: Callable[[np.ndarray, int], tuple[float, np.ndarray | None, np.ndarray | None]]
    default_start: np.ndarray
    mats: FohMatrices
    x_init: np.ndarray
    u_init: np.ndarray
    factors: EqualityFactors
    bounds_infeasible: bool = False
    eq_inconsistent: bool = False
    eq_row_counts: dict = field(default_factory=dict)

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_state = 3 * self.m * self.n_horizon
        xs = z[:n_state].reshape(self.n_horizon, 3 * self.m)
        us = z[n_state:].reshape(self.n_horizon, self.m)
        return xs, us

    def join(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(xs).ravel(), np.asarray(us).ravel()])


@dataclass
class SolveResult:
    z: np.ndarray
    xs: np.ndarray
    us: np.ndarray
    status: str
    kkt_residual: float
    iterations: int
    solve_time: float
    objective: float
    objective_history: list[float]
    eq_multipliers: np.ndarray
    bound_multipliers: np.ndarray


def assemble(
    mats: FohMatrices,
    x_init: np.ndarray,
    u_init: np.ndarray,
    n_split: int,
    n_horizon: int,
    waypoint_box: tuple[np.ndarray, np.ndarray],
    goal_box: tuple[np.ndarray, np.ndarray],
    bounds: StateBounds,
    cost_ctx: CostContext,
) -> NlpProblem:
    """Build the horizon program for given split index and horizon length.

    The feasible set is: two-point dynamics for k = 0..N-2, pinned initial
    state and input, terminal steady state (zero velocity/acceleration, zero
    final input), state boxes at every sample, and the waypoint/goal boxes
    folded into the position bounds at samples n_split-1 and N-1.
    """
    m = mats.m
    n = n_horizon
    if n < 2:
        raise ValueError(f"horizon must be >= 2, got {n}")
    if not 0 <= n_split <= n:
        raise ValueError(f"need 0 <= n_split <= horizon, got {n_split}, {n}")
    x_init = np.asarray(x_init, dtype=float)
    u_init = np.asarray(u_init, dtype=float)
    if x_init.shape != (3 * m,) or u_init.shape != (m,):
        raise ValueError("x_init/u_init dimensions inconsistent with the model")

    n_dec = 4 * m * n
    x_off = lambda k: 3 * m * k
    u_off = lambda k: 3 * m * n + m * k

    n_dyn = 3 * m * (n - 1)
    n_initial = 4 * m
    n_terminal = 3 * m
    A = np.zeros((n_dyn + n_initial + n_terminal, n_dec))
    b = np.zeros(A.shape[0])
    row = 0
    eye3m = np.eye(3 * m)
    for k in range(n - 1):
        rows = slice(row, row + 3 * m)
        A[rows, x_off(k + 1) : x_off(k + 1) + 3 * m] = eye3m
        A[rows, x_off(k) : x_off(k) + 3 * m] = -mats.Phi
        A[rows, u_off(k) : u_off(k) + m] = -mats.Gamma1
        A[rows, u_off(k + 1) : u_off(k + 1) + m] = -mats.Gamma2
        row += 3 * m
    for j in range(3 * m):
        A[row, x_off(0) + j] = 1.0
        b[row] = x_init[j]
        row += 1
    for j in range(m):
        A[row, u_off(0) + j] = 1.0
        b[row] = u_init[j]
        row += 1
    for j in range(2 * m):  # qdot_{N-1} = 0 and qddot_{N-1} = 0
        A[row, x_off(n - 1) + m + j] = 1.0
        row += 1
    for j in range(m):  # u_{N-1} = 0
        A[row, u_off(n - 1) + j] = 1.0
        row += 1

    lb = np.full(n_dec, -np.inf)
    ub = np.full(n_dec, np.inf)
    for k in range(n):
        o = x_off(k)
        lb[o : o + m] = bounds.q_lo
        ub[o : o + m] = bounds.q_hi
        lb[o + m : o + 2 * m] = -bounds.qdot_max
        ub[o + m : o + 2 * m] = bounds.qdot_max
        lb[o + 2 * m : o + 3 * m] = -bounds.qddot_max
        ub[o + 2 * m : o + 3 * m] = bounds.qddot_max
        if bounds.u_max is not None:
            lb[u_off(k) : u_off(k) + m] = -bounds.u_max
            ub[u_off(k) : u_off(k) + m] = bounds.u_max
    # the pinned sample is governed by its equality rows; boxes there would
    # only manufacture spurious infeasibility from floating-point drift
    lb[x_off(0) : x_off(0) + 3 * m] = -np.inf
    ub[x_off(0) : x_off(0) + 3 * m] = np.inf
    lb[u_off(0) : u_off(0) + m] = -np.inf
    ub[u_off(0) : u_off(0) + m] = np.inf
    # terminal boxes are additional constraints: intersect them
    if 1 <= n_split <= n:
        o = x_off(n_split - 1)
        lb[o : o + m] = np.maximum(lb[o : o + m], waypoint_box[0])
        ub[o : o + m] = np.minimum(ub[o : o + m], waypoint_box[1])
    o = x_off(n - 1)
    lb[o : o + m] = np.maximum(lb[o : o + m], goal_box[0])
    ub[o : o + m] = np.minimum(ub[o : o + m], goal_box[1])

    bounds_infeasible = bool(np.any(lb > ub))

    A, b, eq_inconsistent = _reduce_rows(A, b)
    factors = _factor_equalities(A)

    evaluate = _make_evaluator(cost_ctx, m, n, n_split, n_dec)

    xs0 = np.tile(x_init, (n, 1))
    us0 = np.zeros((n, m))
    us0[0] = u_init
    default_start = np.concatenate([xs0.ravel(), us0.ravel()])

    return NlpProblem(
        n_dec=n_dec,
        m=m,
        n_horizon=n,
        n_split=n_split,
        A=A,
        b=b,
        lb=lb,
        ub=ub,
        evaluate=evaluate,
        default_start=default_start,
        mats=mats,
        x_init=x_init.copy(),
        u_init=u_init.copy(),
        factors=factors,
        bounds_infeasible=bounds_infeasible,
        eq_inconsistent=eq_inconsistent,
        eq_row_counts={"dynamics": n_dyn, "initial": n_initial, "terminal": n_terminal},
    )


def _reduce_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Drop linearly dependent equality rows; detect inconsistent ones."""
    _, r_fac, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_fac))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank == A.shape[0]:
        return A, b, False
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    a_keep, b_keep = A[keep], b[keep]
    z_ls, *_ = np.linalg.lstsq(a_keep, b_keep, rcond=None)
    residual = np.abs(A[drop] @ z_ls - b[drop])
    inconsistent = bool(np.any(residual > 1e-8 * (1.0 + np.max(np.abs(b)))))
    return a_keep, b_keep, inconsistent


def _factor_equalities(A: np.ndarray) -> EqualityFactors:
    n = A.shape[1]
    n_eq = A.shape[0]
    if n_eq == 0:
        return EqualityFactors(Q1=np.zeros((n, 0)), R1=np.zeros((0, 0)), Z=np.eye(n))
    q_full, r_full = scipy.linalg.qr(A.T, mode="full")
    return EqualityFactors(Q1=q_full[:, :n_eq], R1=r_full[:n_eq, :n_eq], Z=q_full[:, n_eq:])


def _make_evaluator(ctx: CostContext, m: int, n: int, n_split: int, n_dec: int):
    """Objective closure returning (value, gradient, Gauss-Newton Hessian)."""
    params = ctx.params
    q_w = np.asarray(ctx.q_w, dtype=float)
    q_g = np.asarray(ctx.q_g, dtype=float)
    gamma = params.gamma
    world = ctx.world
    has_col = world is not None and len(world.obstacles) > 0 and params.w3 > 0.0
    n_state = 3 * m * n

    def evaluate(z: np.ndarray, order: int = 1):
        xs = z[:n_state].reshape(n, 3 * m)
        us = z[n_state:].reshape(n, m)
        q = xs[:, :m]

        f = params.u_weight * float(np.sum(us * us))
        grad_q = np.zeros((n, m))
        curv_q = np.zeros((n, m, m)) if order >= 2 else None

        for lo, hi, ref, w in ((0, n_split, q_w, params.w1), (n_split, n, q_g, params.w2)):
            if hi <= lo or w == 0.0:
                continue
            e = q[lo:hi] - ref
            s = np.sqrt(e * e + gamma * gamma)
            f += w * float(np.sum(s - gamma))
            if order >= 1:
                grad_q[lo:hi] += w * e / s
            if order >= 2:
                diag = w * gamma * gamma / (s**3)
                for k in range(lo, hi):
                    curv_q[k] += np.diag(diag[k - lo])

        if has_col:
            values, grads, curv = _collision.l_col_batch(world, q, params, with_curvature=order >= 2)
            f += params.w3 * float(np.sum(values))
            if order >= 1:
                grad_q += params.w3 * grads
            if order >= 2:
                curv_q += params.w3 * curv

        if order == 0:
            return f, None, None

        g = np.zeros(n_dec)
        for k in range(n):
            g[3 * m * k : 3 * m * k + m] = grad_q[k]
        g[n_state:] = 2.0 * params.u_weight * us.ravel()
        if order == 1:
            return f, g, None

        hess = np.zeros((n_dec, n_dec))
        for k in range(n):
            o = 3 * m * k
            hess[o : o + m, o : o + m] = curv_q[k]
        hess[n_state:, n_state:] = np.diag(np.full(m * n, 2.0 * params.u_weight))
        return f, g, hess

    return evaluate


# ---------------------------------------------------------------------------
# QP subproblem: min 1/2 p'Bp + g'p  s.t.  Ap = r,  lb <= p <= ub
#
# Condensed onto p = p0 + Z y (so Ap = r exactly), leaving a small, strictly
# convex inequality QP over y that a Goldfarb-Idnani dual active-set loop
# solves exactly: it starts at the unconstrained minimum and adds violated
# rows one at a time, so constraint satisfaction and complementarity hold to
# linear-solve precision at exit. The condensation removes the stiff
# equality/box geometry that makes first-order splitting methods crawl on
# minimum-horizon instances.
# ---------------------------------------------------------------------------


@dataclass
class QpResult:
    x: np.ndarray
    y_eq: np.ndarray
    y_box: np.ndarray
    status: str
    iterations: int


def solve_qp(
    hess: np.ndarray,
    grad: np.ndarray,
    A: np.ndarray,
    r: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    max_iter: int = 0,
) -> QpResult:
    """Standalone entry: factors the equality rows, then runs the reduced QP."""
    return _solve_qp_factored(hess, grad, _factor_equalities(A), r, lb, ub, max_iter)


def _solve_qp_factored(
    hess: np.ndarray,
    grad: np.ndarray,
    factors: EqualityFactors,
    r: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    max_iter: int = 0,
) -> QpResult:
    n = grad.size
    Z = factors.Z
    n_red = Z.shape[1]
    p0 = factors.particular(r)

    def full_result(p, y_box, status, iters):
        y_eq = factors.eq_multipliers(hess @ p + grad + y_box)
        return QpResult(p, y_eq, y_box, status, iters)

    rows = np.flatnonzero(np.isfinite(lb) | np.isfinite(ub))
    if n_red == 0:
        # fully determined by the equalities; the box decides feasibility
        viol = max(
            float(np.max(np.maximum(lb[rows] - p0[rows], 0.0), initial=0.0)),
            float(np.max(np.maximum(p0[rows] - ub[rows], 0.0), initial=0.0)),
        )
        status = "solved" if viol <= 1e-9 else STATUS_INFEASIBLE
        return full_result(p0, np.zeros(n), status, 0)

    h_red = Z.T @ (hess @ Z)
    h_red = 0.5 * (h_red + h_red.T)
    # strict convexity safeguard; the reduced Hessian is PD by construction
    # but collision curvature can make it nearly singular
    h_red[np.diag_indices(n_red)] += 1e-9 * max(1.0, float(np.max(np.abs(h_red))))
    g_red = Z.T @ (hess @ p0 + grad)

    # one-sided rows  c_j' y >= b_j  from each finite bound, unit-normalized
    c_list = []
    b_list = []
    kind = []  # (variable index, +1 lower / -1 upper, row norm)
    for i in rows:
        zi = Z[i]
        norm = float(np.linalg.norm(zi))
        if norm < 1e-14:
            # direction absent from the feasible subspace: bound is either
            # satisfied identically by p0 or impossible
            if (np.isfinite(lb[i]) and p0[i] < lb[i] - 1e-9) or (
                np.isfinite(ub[i]) and p0[i] > ub[i] + 1e-9
            ):
                return full_result(p0, np.zeros(n), STATUS_INFEASIBLE, 0)
            continue
        if np.isfinite(lb[i]):
            c_list.append(zi / norm)
            b_list.append((lb[i] - p0[i]) / norm)
            kind.append((i, 1, norm))
        if np.isfinite(ub[i]):
            c_list.append(-zi / norm)
            b_list.append(-(ub[i] - p0[i]) / norm)
            kind.append((i, -1, norm))

    C = np.array(c_list) if c_list else np.zeros((0, n_red))
    b_vec = np.array(b_list)
    if max_iter <= 0:
        max_iter = 5 * (C.shape[0] + n_red) + 50
    y, duals, status, iters = _dual_active_set(h_red, g_red, C, b_vec, max_iter)

    p = p0 + Z @ y
    y_box = np.zeros(n)
    for dual, (i, side, norm) in zip(duals, kind):
        # duals belong to the normalized rows; stationarity convention is
        # grad + A'lam + y_box = 0 with y_box <= 0 at lower bounds
        y_box[i] += -dual / norm if side == 1 else dual / norm
    return full_result(p, y_box, status, iters)


def _dual_active_set(P, q, C, b, max_iter: int) -> tuple[np.ndarray, np.ndarray, str, int]:
    """Goldfarb-Idnani dual method for min 1/2 y'Py + q'y s.t. C y >= b.

    P must be positive definite. Returns the primal point, one multiplier per
    row (>= 0), a status string, and the iteration count.
    """
    n = q.size
    chol = scipy.linalg.cho_factor(P, check_finite=False)
    y = -scipy.linalg.cho_solve(chol, q, check_finite=False)
    n_rows = C.shape[0]
    duals = np.zeros(n_rows)
    if n_rows == 0:
        return y, duals, "solved", 0

    active: list[int] = []
    lam = np.zeros(0)
    feas_tol = 1e-10 * (1.0 + float(np.max(np.abs(b))))

    it = 0
    while it < max_iter:
        it += 1
        slack = C @ y - b
        if active:
            slack[active] = 0.0  # active rows hold exactly by construction
        worst = int(np.argmin(slack))
        if slack[worst] >= -feas_tol:
            duals[:] = 0.0
            duals[active] = lam
            return y, duals, "solved", it

        n_p = C[worst]
        s_p = float(slack[worst])
        lam_p = 0.0
        while True:
            pinv_np = scipy.linalg.cho_solve(chol, n_p, check_finite=False)
            if active:
                n_mat = C[active].T  # (n, |W|)
                pinv_n = scipy.linalg.cho_solve(chol, n_mat, check_finite=False)
                small = n_mat.T @ pinv_n
                r_dir = scipy.linalg.solve(small, n_mat.T @ pinv_np, assume_a="pos")
                z_dir = pinv_np - pinv_n @ r_dir
            else:
                r_dir = np.zeros(0)
                z_dir = pinv_np

            denom = float(n_p @ z_dir)
            t2 = np.inf if denom <= 1e-14 else -s_p / denom
            t1 = np.inf
            blocking = -1
            for j, idx in enumerate(active):
                if r_dir[j] > 1e-14:
                    step = lam[j] / r_dir[j]
                    if step < t1:
                        t1 = step
                        blocking = j
            t = min(t1, t2)
            if not np.isfinite(t):
                duals[:] = 0.0
                duals[active] = lam
                return y, duals, STATUS_INFEASIBLE, it

            if np.isfinite(t2):
                y = y + t * z_dir
                s_p = float(n_p @ y - b[worst])
            lam = lam - t * r_dir
            lam_p += t

            if t == t2:
                active.append(worst)
                lam = np.append(lam, lam_p)
                break
            # dual step hit a blocking constraint: drop it and retry
            del active[blocking]
            lam = np.delete(lam, blocking)
            if it >= max_iter:
                break
            it += 1

    duals[:] = 0.0
    duals[active] = lam
    return y, duals, STATUS_MAX_ITER, it


# ---------------------------------------------------------------------------
# SQP driver
# ---------------------------------------------------------------------------


def _box_violation(z, lb, ub) -> float:
    return float(
        max(np.max(np.maximum(lb - z, 0.0), initial=0.0), np.max(np.maximum(z - ub, 0.0), initial=0.0))
    )


def _violation_l1(problem: NlpProblem, z: np.ndarray) -> float:
    eq = float(np.sum(np.abs(problem.A @ z - problem.b))) if problem.A.shape[0] else 0.0
    box = float(np.sum(np.maximum(problem.lb - z, 0.0)) + np.sum(np.maximum(z - problem.ub, 0.0)))
    return eq + box


def kkt_residual(
    problem: NlpProblem, z: np.ndarray, multipliers: tuple[np.ndarray, np.ndarray]
) -> float:
    """Max of stationarity, primal feasibility and complementarity residuals."""
    y_eq, y_box = multipliers
    _, grad, _ = problem.evaluate(z, 1)
    stationarity = grad + (problem.A.T @ y_eq if problem.A.shape[0] else 0.0) + y_box
    stat = float(np.max(np.abs(stationarity)))
    feas_eq = float(np.max(np.abs(problem.A @ z - problem.b))) if problem.A.shape[0] else 0.0
    feas = max(feas_eq, _box_violation(z, problem.lb, problem.ub))
    comp = 0.0
    for i in range(problem.n_dec):
        y = y_box[i]
        if y > 0.0:
            gap = problem.ub[i] - z[i]
            comp = max(comp, abs(y) if np.isinf(gap) else abs(y * gap))
        elif y < 0.0:
            gap = z[i] - problem.lb[i]
            comp = max(comp, abs(y) if np.isinf(gap) else abs(y * gap))
    return max(stat, feas, comp)


def _feasible_point_exists(problem: NlpProblem) -> bool:
    """Bounded least-squares cross-check of equality/box consistency."""
    from scipy.optimize import lsq_linear

    if problem.A.shape[0] == 0:
        return True
    res = lsq_linear(
        problem.A,
        problem.b,
        bounds=(problem.lb, problem.ub),
        tol=1e-14,
        max_iter=300,
    )
    resid = float(np.max(np.abs(problem.A @ res.x - problem.b)))
    return resid <= 1e-7 * (1.0 + float(np.max(np.abs(problem.b))))


def solve(
    problem: NlpProblem,
    warm_start: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
    time_budget: float | None = None,
) -> SolveResult:
    """SQP solve of the assembled problem.

    status=converged guarantees a KKT residual below tol, equality and box
    feasibility below 1e-9, and a trajectory that re-rolls exactly through
    the dynamics. An exceeded time budget or iteration cap returns the best
    iterate with status=max_iter; an empty feasible set reports infeasible.
    """
    t_start = time.perf_counter()
    n = problem.n_dec

    def finish(z, status, kkt, iterations, history, y_eq, y_box):
        z = _repair(problem, z)
        xs, us = problem.split(z)
        f_final, _, _ = problem.evaluate(z, 0)
        return SolveResult(
            z=z,
            xs=xs.copy(),
            us=us.copy(),
            status=status,
            kkt_residual=kkt,
            iterations=iterations,
            solve_time=time.perf_counter() - t_start,
            objective=f_final,
            objective_history=history,
            eq_multipliers=y_eq,
            bound_multipliers=y_box,
        )

    z = problem.default_start.copy() if warm_start is None else np.asarray(warm_start, dtype=float).copy()
    if z.shape != (n,):
        raise ValueError(f"warm start must have shape ({n},), got {z.shape}")
    zero_eq = np.zeros(problem.A.shape[0])
    zero_box = np.zeros(n)

    if problem.bounds_infeasible or problem.eq_inconsistent:
        return finish(z, STATUS_INFEASIBLE, np.inf, 0, [], zero_eq, zero_box)

    history: list[float] = []
    rho_merit = 10.0
    y_eq, y_box = zero_eq, zero_box
    status = STATUS_MAX_ITER
    kkt = np.inf
    it = 0

    while it < max_iter:
        it += 1
        f, g, hess = problem.evaluate(z, 2)
        history.append(f)

        r = problem.b - problem.A @ z if problem.A.shape[0] else np.zeros(0)
        qp = _solve_qp_factored(hess, g, problem.factors, r, problem.lb - z, problem.ub - z)
        if qp.status == STATUS_INFEASIBLE:
            if not _feasible_point_exists(problem):
                status = STATUS_INFEASIBLE
                return finish(z, status, np.inf, it, history, y_eq, y_box)
            # numerically false negative: stop with the current iterate
            kkt = kkt_residual(problem, z, (y_eq, y_box))
            return finish(z, STATUS_MAX_ITER, kkt, it, history, y_eq, y_box)
        p, y_eq, y_box = qp.x, qp.y_eq, qp.y_box
        out_of_time = time_budget is not None and time.perf_counter() - t_start > time_budget

        stat = float(np.max(np.abs(g + (problem.A.T @ y_eq if problem.A.shape[0] else 0.0) + y_box)))
        feas = max(
            float(np.max(np.abs(problem.A @ z - problem.b))) if problem.A.shape[0] else 0.0,
            _box_violation(z, problem.lb, problem.ub),
        )
        scale = 1.0 + float(np.max(np.abs(g)))
        if feas <= 1e-9 and float(np.max(np.abs(p))) <= 1e3 * tol * scale:
            kkt = kkt_residual(problem, z, (y_eq, y_box))
            if kkt <= tol:
                status = STATUS_CONVERGED
                return finish(z, status, kkt, it, history, y_eq, y_box)

        # l1 exact-penalty line search; constraints are linear so the
        # violation shrinks by exactly (1 - alpha) along the QP step
        viol0 = _violation_l1(problem, z)
        mult_inf = max(
            float(np.max(np.abs(y_eq))) if y_eq.size else 0.0,
            float(np.max(np.abs(y_box))) if y_box.size else 0.0,
        )
        rho_merit = max(rho_merit, 2.0 * mult_inf)
        directional = float(g @ p) - rho_merit * viol0
        phi0 = f + rho_merit * viol0
        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-30:
            z_try = z + alpha * p
            f_try, _, _ = problem.evaluate(z_try, 0)
            phi_try = f_try + rho_merit * _violation_l1(problem, z_try)
            if phi_try <= phi0 + 1e-4 * alpha * directional + 1e-12 * abs(phi0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            kkt = kkt_residual(problem, z, (y_eq, y_box))
            status = STATUS_CONVERGED if kkt <= tol else STATUS_MAX_ITER
            return finish(z, status, kkt, it, history, y_eq, y_box)
        z = z_try

        if out_of_time or (time_budget is not None and time.perf_counter() - t_start > time_budget):
            break

    kkt = kkt_residual(problem, z, (y_eq, y_box))
    if kkt <= tol:
        status = STATUS_CONVERGED
    return finish(z, status, kkt, it, history, y_eq, y_box)


def _repair(problem: NlpProblem, z: np.ndarray) -> np.ndarray:
    """Re-roll the states through the exact dynamics when that loses nothing.

    Pins the initial sample and final input exactly, then compares box and
    terminal-equality residuals; the rolled trajectory is kept only when it
    is at least as feasible as the iterate.
    """
    xs, us = problem.split(z)
    us_rep = us.copy()
    us_rep[0] = problem.u_init
    us_rep[-1] = 0.0
    xs_rep = rollout(problem.x_init, us_rep, problem.mats)
    z_rep = problem.join(xs_rep, us_rep)
    viol_before = _box_violation(z, problem.lb, problem.ub)
    viol_after = _box_violation(z_rep, problem.lb, problem.ub)
    m = problem.m
    terminal_before = float(np.max(np.abs(xs[-1, m:])))
    terminal_after = float(np.max(np.abs(xs_rep[-1, m:])))
    if viol_after <= max(viol_before, 1e-9) and terminal_after <= max(terminal_before, 1e-9):
        return z_rep
    return z
