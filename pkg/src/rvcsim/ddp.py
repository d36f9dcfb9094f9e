"""Finite-horizon trajectory optimization via differential dynamic programming.

Minimizes, over a fixed horizon discretized into n_traj steps,

    0.5 ||p_f - p(T)||^2_Ppf + 0.5 ||log(R_f^T R(T))||^2_PRf
      + sum_k dt * (0.5 u_k^T R_u u_k + w_s ||(I - r_z r_z^T)(p_rcm - p_k)||^2)

subject to the rigid-body dynamics in :mod:`rvcsim.dynamics`. The pivot-point
(sclera) constraint enters as the least-squares penalty term weighted by w_s.

The backward/forward passes run in a 12-dim tangent chart around the nominal
trajectory: (dp, dphi, dv, dw) with dphi the body-frame rotation log. The
dynamics Jacobians in that chart are exact closed forms, which the
finite-difference test suite checks directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    InertiaParams,
    RigidBodyState,
    angular_acceleration,
    gyro_jacobian,
    step,
)
from .se3 import (
    Pose,
    dleft_jacobian_apply,
    exp_so3,
    hat3,
    left_jacobian,
    log_so3,
    right_jacobian,
    right_jacobian_inv,
    rot_to_quat,
    _readonly,
)

N_TANGENT = 12  # (dp, dphi, dv, dw)
E_Z = np.array([0.0, 0.0, 1.0])


class NonFiniteCost(RuntimeError):
    """A rollout produced a non-finite cost; the caller should keep its previous plan."""


class NotConverged(RuntimeError):
    """Solver stalled before making any progress; carries the best trajectory seen."""

    def __init__(self, trajectory: "Trajectory", message: str = "DDP failed to improve"):
        super().__init__(message)
        self.trajectory = trajectory


def _check_psd(M, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (M.shape[0], M.shape[0]) or not np.allclose(M, M.T, atol=1e-9):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(M)) < -1e-9:
        raise ValueError(f"{name} must be positive semidefinite")
    return M


@dataclass(frozen=True)
class CostWeights:
    """Terminal position/orientation gains, control penalty, and pivot weight."""

    P_pf: np.ndarray = None
    P_Rf: np.ndarray = None
    R_u: np.ndarray = None
    w_s: float = 1.0e4

    def __post_init__(self):
        P_pf = 1.0e6 * np.eye(3) if self.P_pf is None else self.P_pf
        P_Rf = 1.0e2 * np.eye(3) if self.P_Rf is None else self.P_Rf
        R_u = np.eye(6) if self.R_u is None else self.R_u
        object.__setattr__(self, "P_pf", _readonly(_check_psd(P_pf, "P_pf")))
        object.__setattr__(self, "P_Rf", _readonly(_check_psd(P_Rf, "P_Rf")))
        object.__setattr__(self, "R_u", _readonly(_check_psd(R_u, "R_u")))
        if np.min(np.linalg.eigvalsh(self.R_u)) <= 0.0:
            raise ValueError("R_u must be positive definite")
        if self.w_s < 0.0:
            raise ValueError("w_s must be nonnegative")


@dataclass(frozen=True)
class PlanProblem:
    x0: RigidBodyState
    p_f: np.ndarray
    R_f: np.ndarray
    p_rcm: np.ndarray
    horizon: float = 2.0
    n_traj: int = 64
    inertia: InertiaParams = field(default_factory=InertiaParams)

    def __post_init__(self):
        object.__setattr__(self, "p_f", _readonly(np.reshape(self.p_f, 3)))
        object.__setattr__(self, "R_f", _readonly(np.reshape(self.R_f, (3, 3))))
        object.__setattr__(self, "p_rcm", _readonly(np.reshape(self.p_rcm, 3)))
        if self.n_traj < 2:
            raise ValueError("n_traj must be at least 2")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_traj


@dataclass(frozen=True)
class Trajectory:
    """Discrete state/control sequence; states[k+1] = step(states[k], controls[k])."""

    states: tuple
    controls: tuple
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(
            self, "controls", tuple(_readonly(np.reshape(u, 6)) for u in self.controls)
        )

    def __len__(self) -> int:
        return len(self.controls)

    def export_table(self, t0: float = 0.0) -> str:
        """Plain-text table: one row per step with t, p, quaternion, V, u."""
        lines = ["# t px py pz qw qx qy qz vx vy vz wx wy wz u1 u2 u3 u4 u5 u6"]
        for k, x in enumerate(self.states):
            u = self.controls[k] if k < len(self.controls) else np.zeros(6)
            q = rot_to_quat(x.g.R)
            row = np.concatenate([[t0 + k * self.dt], x.g.p, q, x.V, u])
            lines.append(" ".join(format(val, ".12g") for val in row))
        return "\n".join(lines) + "\n"


def rcm_error(p, R, p_rcm) -> float:
    """Distance from the pivot point to the line through p along the tool z-axis."""
    r_z = np.asarray(R, dtype=float) @ E_Z
    d = np.asarray(p_rcm, dtype=float) - np.asarray(p, dtype=float)
    return float(np.linalg.norm(d - r_z * np.dot(r_z, d)))


def running_cost(x: RigidBodyState, u, weights: CostWeights, p_rcm) -> float:
    """Instantaneous cost integrand: control effort plus pivot-deviation penalty."""
    u = np.asarray(u, dtype=float)
    e = rcm_error(x.g.p, x.g.R, p_rcm)
    return 0.5 * float(u @ (weights.R_u @ u)) + weights.w_s * e * e


def terminal_cost(x: RigidBodyState, problem: PlanProblem, weights: CostWeights) -> float:
    ep = x.g.p - problem.p_f
    ephi = log_so3(problem.R_f.T @ x.g.R)
    return 0.5 * float(ep @ (weights.P_pf @ ep)) + 0.5 * float(ephi @ (weights.P_Rf @ ephi))


def trajectory_cost(problem: PlanProblem, weights: CostWeights, states, controls) -> float:
    dt = problem.dt
    total = sum(
        dt * running_cost(x, u, weights, problem.p_rcm) for x, u in zip(states, controls)
    )
    return total + terminal_cost(states[-1], problem, weights)


# ---------------------------------------------------------------------------
# tangent chart


def state_diff(x: RigidBodyState, ref: RigidBodyState) -> np.ndarray:
    """Tangent coordinates of x around ref: (dp, dphi, dv, dw)."""
    return np.concatenate(
        [x.g.p - ref.g.p, log_so3(ref.g.R.T @ x.g.R), x.V - ref.V]
    )


def state_retract(ref: RigidBodyState, dx) -> RigidBodyState:
    dx = np.asarray(dx, dtype=float)
    g = Pose(ref.g.p + dx[:3], ref.g.R @ exp_so3(dx[3:6]))
    return RigidBodyState(g, ref.V + dx[6:])


def linearize_step(x: RigidBodyState, u, inertia: InertiaParams, dt: float):
    """Exact Jacobians (A, B) of step() in the tangent chart around (x, u)."""
    u = np.asarray(u, dtype=float)
    J_inv = np.diag(1.0 / inertia.J)
    w = x.w
    w_mid = w + 0.5 * dt * angular_acceleration(w, u[3:], inertia)
    w_new = w + dt * angular_acceleration(w_mid, u[3:], inertia)
    v_new = x.v + dt * u[:3] / inertia.m

    G_mid = gyro_jacobian(w_mid, inertia)
    Dw = np.eye(3) + dt * G_mid @ (np.eye(3) + 0.5 * dt * gyro_jacobian(w, inertia))
    Dw_u = dt * (np.eye(3) + 0.5 * dt * G_mid) @ J_inv

    phi = dt * w_new
    E = exp_so3(phi)
    Jl = left_jacobian(phi)
    Jr = right_jacobian(phi)
    delta = Jl @ (dt * v_new)
    R = x.g.R
    # dp' column blocks
    dp_dphi = -R @ hat3(delta)
    dp_dv = R @ Jl * dt
    dDelta_dwnew = dleft_jacobian_apply(phi, dt * v_new) * dt
    dp_dw = R @ dDelta_dwnew @ Dw
    # dphi' column blocks
    dphi_dphi = E.T
    dphi_dw = dt * Jr @ Dw

    A = np.zeros((N_TANGENT, N_TANGENT))
    A[0:3, 0:3] = np.eye(3)
    A[0:3, 3:6] = dp_dphi
    A[0:3, 6:9] = dp_dv
    A[0:3, 9:12] = dp_dw
    A[3:6, 3:6] = dphi_dphi
    A[3:6, 9:12] = dphi_dw
    A[6:9, 6:9] = np.eye(3)
    A[9:12, 9:12] = Dw

    B = np.zeros((N_TANGENT, 6))
    B[0:3, 0:3] = dp_dv * (dt / inertia.m)
    B[0:3, 3:6] = R @ dDelta_dwnew @ Dw_u
    B[3:6, 3:6] = dt * Jr @ Dw_u
    B[6:9, 0:3] = (dt / inertia.m) * np.eye(3)
    B[9:12, 3:6] = Dw_u
    return A, B


def _rcm_residual_jacobians(x: RigidBodyState, p_rcm):
    """Residual e = (I - r_z r_z^T)(p_rcm - p) and its chart Jacobians."""
    R = x.g.R
    r_z = R @ E_Z
    d = p_rcm - x.g.p
    e = d - r_z * np.dot(r_z, d)
    de_dp = -(np.eye(3) - np.outer(r_z, r_z))
    de_dphi = (np.dot(r_z, d) * np.eye(3) + np.outer(r_z, d)) @ R @ hat3(E_Z)
    return e, de_dp, de_dphi


def running_expansion(x: RigidBodyState, u, weights: CostWeights, p_rcm, dt: float):
    """First/second-order expansion of dt * running_cost in the chart (Gauss-Newton)."""
    u = np.asarray(u, dtype=float)
    lx = np.zeros(N_TANGENT)
    lxx = np.zeros((N_TANGENT, N_TANGENT))
    lu = dt * (weights.R_u @ u)
    luu = dt * np.asarray(weights.R_u)
    if weights.w_s > 0.0:
        e, de_dp, de_dphi = _rcm_residual_jacobians(x, p_rcm)
        Jst = np.hstack([de_dp, de_dphi])  # 3x6 over (dp, dphi)
        lx[:6] = 2.0 * weights.w_s * dt * (Jst.T @ e)
        lxx[:6, :6] = 2.0 * weights.w_s * dt * (Jst.T @ Jst)
    return lx, lu, lxx, luu


def terminal_expansion(x: RigidBodyState, problem: PlanProblem, weights: CostWeights):
    lx = np.zeros(N_TANGENT)
    lxx = np.zeros((N_TANGENT, N_TANGENT))
    ep = x.g.p - problem.p_f
    lx[:3] = weights.P_pf @ ep
    lxx[:3, :3] = weights.P_pf
    phi_err = log_so3(problem.R_f.T @ x.g.R)
    Jri = right_jacobian_inv(phi_err)
    lx[3:6] = Jri.T @ (weights.P_Rf @ phi_err)
    lxx[3:6, 3:6] = Jri.T @ weights.P_Rf @ Jri
    return lx, lxx


def cost_gradient(problem: PlanProblem, weights: CostWeights, traj: Trajectory):
    """Gradient of total cost w.r.t. (x0 tangent, all controls) for fixed controls.

    Runs the same linearization the backward pass uses, in pure adjoint mode;
    the test suite checks it against central finite differences of the
    rolled-out cost.
    """
    N = len(traj)
    dt = traj.dt
    lam, _ = terminal_expansion(traj.states[-1], problem, weights)
    g_us = np.zeros((N, 6))
    for k in reversed(range(N)):
        x, u = traj.states[k], traj.controls[k]
        A, B = linearize_step(x, u, problem.inertia, dt)
        lx, lu, _, _ = running_expansion(x, u, weights, problem.p_rcm, dt)
        g_us[k] = lu + B.T @ lam
        lam = lx + A.T @ lam
    return lam, g_us


# ---------------------------------------------------------------------------
# solver


def rollout(x0: RigidBodyState, controls, inertia: InertiaParams, dt: float):
    states = [x0]
    for u in controls:
        states.append(step(states[-1], u, inertia, dt))
    return states


def solve(
    problem: PlanProblem,
    weights: CostWeights,
    warm_start: Trajectory | None = None,
    tol_rel: float = 1e-6,
    max_iters: int = 100,
    info: dict | None = None,
) -> Trajectory:
    """Solve the optimal control problem by DDP with backtracking line search.

    Regularization is a Levenberg-style term on the value Hessian (x10 on a
    failed backtrack sweep, /2 on success, floor 1e-9). Accepted iterations
    strictly decrease the cost; the returned trajectory never costs more than
    the zero-control rollout.

    Raises NonFiniteCost if the seed rollout diverges and NotConverged (with
    the best trajectory attached) if no improving step is ever found.
    """
    dt = problem.dt
    N = problem.n_traj
    inertia = problem.inertia

    us = np.zeros((N, 6))
    xs = rollout(problem.x0, us, inertia, dt)
    cost = trajectory_cost(problem, weights, xs, us)
    if not np.isfinite(cost):
        raise NonFiniteCost("zero-control rollout has non-finite cost")
    if warm_start is not None:
        if len(warm_start) != N:
            raise ValueError("warm start has mismatched step count")
        ws_us = np.array(warm_start.controls)
        ws_xs = rollout(problem.x0, ws_us, inertia, dt)
        ws_cost = trajectory_cost(problem, weights, ws_xs, ws_us)
        if np.isfinite(ws_cost) and ws_cost < cost:
            us, xs, cost = ws_us, ws_xs, ws_cost

    mu = 1e-9
    mu_max = 1e10
    history = [cost]
    improved_once = False
    alphas = [2.0 ** (-i) for i in range(11)]

    for _ in range(max_iters):
        # expansions around the nominal
        As, Bs, lxs, lus, lxxs, luus = [], [], [], [], [], []
        for k in range(N):
            A, B = linearize_step(xs[k], us[k], inertia, dt)
            lx, lu, lxx, luu = running_expansion(xs[k], us[k], weights, problem.p_rcm, dt)
            As.append(A)
            Bs.append(B)
            lxs.append(lx)
            lus.append(lu)
            lxxs.append(lxx)
            luus.append(luu)

        # backward pass; bump mu until the regularized Quu stays PD
        while True:
            Vx, Vxx = terminal_expansion(xs[-1], problem, weights)
            ks, Ks = [None] * N, [None] * N
            ok = True
            for k in reversed(range(N)):
                A, B = As[k], Bs[k]
                Qx = lxs[k] + A.T @ Vx
                Qu = lus[k] + B.T @ Vx
                Vxx_reg = Vxx + mu * np.eye(N_TANGENT)
                Qxx = lxxs[k] + A.T @ Vxx @ A
                Quu = luus[k] + B.T @ Vxx_reg @ B
                Qux = B.T @ Vxx_reg @ A
                Qux_plain = B.T @ Vxx @ A
                Quu_sym = 0.5 * (Quu + Quu.T)
                try:
                    L = np.linalg.cholesky(Quu_sym)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                rhs = np.column_stack([Qu, Qux])
                sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
                kk = -sol[:, 0]
                Kk = -sol[:, 1:]
                ks[k], Ks[k] = kk, Kk
                Quu_plain = luus[k] + B.T @ Vxx @ B
                Vx = Qx + Kk.T @ Quu_plain @ kk + Kk.T @ Qu + Qux_plain.T @ kk
                Vxx = Qxx + Kk.T @ Quu_plain @ Kk + Kk.T @ Qux_plain + Qux_plain.T @ Kk
                Vxx = 0.5 * (Vxx + Vxx.T)
            if ok:
                break
            mu *= 10.0
            if mu > mu_max:
                break
        if not ok:
            break

        # forward pass with backtracking
        accepted = False
        for alpha in alphas:
            new_xs = [problem.x0]
            new_us = np.empty_like(us)
            diverged = False
            for k in range(N):
                dx = state_diff(new_xs[k], xs[k])
                new_us[k] = us[k] + alpha * ks[k] + Ks[k] @ dx
                if not np.all(np.isfinite(new_us[k])):
                    diverged = True
                    break
                new_xs.append(step(new_xs[k], new_us[k], inertia, dt))
            if diverged:
                continue
            new_cost = trajectory_cost(problem, weights, new_xs, new_us)
            if np.isfinite(new_cost) and new_cost < cost:
                rel_improve = (cost - new_cost) / max(abs(cost), 1e-30)
                xs, us, cost = new_xs, new_us, new_cost
                history.append(cost)
                mu = max(mu / 2.0, 1e-9)
                accepted = True
                improved_once = True
                break
        if not accepted:
            mu *= 10.0
            if mu > mu_max:
                break
            continue
        if rel_improve < tol_rel:
            break

    if info is not None:
        info["cost"] = cost
        info["cost_history"] = history
        info["iterations"] = len(history) - 1
        info["mu"] = mu

    traj = Trajectory(tuple(xs), tuple(np.array(u) for u in us), dt)
    if not improved_once and cost > tol_rel:
        # never moved off the seed and the seed is not already optimal
        grad_x0, grad_us = cost_gradient(problem, weights, traj)
        if np.linalg.norm(grad_us) > 1e-7:
            raise NotConverged(traj)
    return traj


def pick_tracking_index(
    traj: Trajectory,
    x_now: RigidBodyState,
    lookahead: int,
    orientation_weight: float = 0.02,
) -> int:
    """Index of the trajectory state closest to x_now, plus a look-ahead offset.

    Pose distance is position error plus orientation geodesic scaled by
    orientation_weight (meters per radian). The result is clamped to the last
    state index.
    """
    if lookahead < 0:
        raise ValueError("lookahead must be nonnegative")
    best_k, best_d = 0, np.inf
    for k, x in enumerate(traj.states):
        d = float(np.linalg.norm(x.g.p - x_now.g.p))
        d += orientation_weight * float(np.linalg.norm(log_so3(x.g.R.T @ x_now.g.R)))
        if d < best_d:
            best_k, best_d = k, d
    return min(best_k + lookahead, len(traj.states) - 1)
