"""Shared-control MPC trajectory planner.

Direct multiple shooting over the per-joint double integrator (joint
accelerations as control inputs) with exact discretization. Because the
dynamics are linear, the shooting states are condensed exactly onto the
control sequence inside each iteration, so returned trajectories satisfy the
discrete dynamics to machine precision. The stage cost is quadratic position
tracking plus a quaternion orientation error term plus small velocity and
acceleration regularizers; the cost integral is approximated with a
dt-weighted left Riemann sum and box constraints on q, qd and u are enforced
at the shooting nodes.

The tracking terms make the objective a nonlinear least-squares problem, so
the default backend is a Gauss-Newton SQP: each iteration linearizes the
residual and solves a strictly convex inequality-constrained QP (active-set,
see qp.py), with adaptive Levenberg damping in place of a line search (plain
Gauss-Newton steps overshoot while residuals stay large). Iterates stay
feasible throughout. Alternative backends can be passed to solve().
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import geometry, kinematics, prediction
from .geometry import Transform
from .kinematics import RobotModel
from .prediction import ReferenceTrajectory


class InfeasibleStartError(ValueError):
    """Initial state violates the configured box bounds beyond tolerance."""


@dataclass(frozen=True)
class OCPConfig:
    horizon: int = 10
    dt: float = 0.1
    w_pos: tuple = (100.0, 100.0, 100.0)
    w_ori: tuple = (100.0, 100.0, 100.0)
    w_vel: tuple = (0.01,) * 6
    w_acc: tuple = (0.01,) * 6
    max_iterations: int = 30
    tol_stationarity: float = 1e-6
    tol_constraint: float = 1e-6

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        for name, size in (("w_pos", 3), ("w_ori", 3), ("w_vel", 6), ("w_acc", 6)):
            w = tuple(float(v) for v in np.asarray(getattr(self, name), dtype=float).reshape(size))
            if any(v < 0.0 for v in w):
                raise ValueError(f"{name} weights must be non-negative")
            object.__setattr__(self, name, w)


@dataclass(frozen=True)
class RobotStateVec:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(6))
        object.__setattr__(self, "qd", np.asarray(self.qd, dtype=float).reshape(6))


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    solve_ms: float
    converged: bool
    kkt_residual: float
    cost_trace: tuple


@dataclass(frozen=True)
class PlannedTrajectory:
    qs: np.ndarray  # (H+1, 6)
    qds: np.ndarray  # (H+1, 6)
    controls: np.ndarray  # (H, 6), piecewise-constant accelerations
    cost: float
    stats: SolveStats

    @property
    def states(self) -> list[RobotStateVec]:
        return [RobotStateVec(q, qd) for q, qd in zip(self.qs, self.qds)]

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]


def discretize(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-joint discretization of the double integrator.

    Returns (Ad, Bd) with Ad = [[1, dt], [0, 1]] and Bd = [dt^2/2, dt]';
    exact for piecewise-constant acceleration input.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    ad = np.array([[1.0, dt], [0.0, 1.0]])
    bd = np.array([0.5 * dt * dt, dt])
    return ad, bd


def world_ee(model: RobotModel, q) -> Transform:
    """End-effector pose in the world frame (base composed onto the chain)."""
    return geometry.compose(model.base, kinematics.forward_kinematics(model, q))


def stage_cost(x: RobotStateVec, u, ref_p, ref_o, cfg: OCPConfig, model: RobotModel) -> float:
    """One stage of the objective, world-frame pose tracking plus regularizers."""
    u = np.asarray(u, dtype=float).reshape(6)
    ref_p = np.asarray(ref_p, dtype=float).reshape(3)
    ee = world_ee(model, x.q)
    dp = ee.pos - ref_p
    e = geometry.quat_error(ref_o, geometry.quat_from_rotation(ee.rot))
    return float(
        dp @ (np.asarray(cfg.w_pos) * dp)
        + e @ (np.asarray(cfg.w_ori) * e)
        + x.qd @ (np.asarray(cfg.w_vel) * x.qd)
        + u @ (np.asarray(cfg.w_acc) * u)
    )


def _quat_from_rotation_batch(rots: np.ndarray) -> np.ndarray:
    """Vectorized largest-pivot quaternion extraction, w >= 0; matches
    geometry.quat_from_rotation branch for branch."""
    n = rots.shape[0]
    out = np.empty((n, 4))
    r00, r11, r22 = rots[:, 0, 0], rots[:, 1, 1], rots[:, 2, 2]
    tr = r00 + r11 + r22
    m = tr > 0.0
    if np.any(m):
        w = np.sqrt(1.0 + tr[m]) / 2.0
        f = 0.25 / w
        out[m, 0] = w
        out[m, 1] = (rots[m, 2, 1] - rots[m, 1, 2]) * f
        out[m, 2] = (rots[m, 0, 2] - rots[m, 2, 0]) * f
        out[m, 3] = (rots[m, 1, 0] - rots[m, 0, 1]) * f
    if not np.all(m):
        choice = np.argmax(np.stack([r00, r11, r22], axis=1), axis=1)
        for i in range(3):
            mi = (~m) & (choice == i)
            if not np.any(mi):
                continue
            j, k = (i + 1) % 3, (i + 2) % 3
            s = np.sqrt(1.0 + rots[mi, i, i] - rots[mi, j, j] - rots[mi, k, k]) / 2.0
            f = 0.25 / s
            out[mi, 0] = (rots[mi, k, j] - rots[mi, j, k]) * f
            out[mi, 1 + i] = s
            out[mi, 1 + j] = (rots[mi, j, i] + rots[mi, i, j]) * f
            out[mi, 1 + k] = (rots[mi, k, i] + rots[mi, i, k]) * f
    neg = out[:, 0] < 0.0
    out[neg] = -out[neg]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _skew_batch(v: np.ndarray) -> np.ndarray:
    n = v.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _quat_error_map_batch(eta_d, eps_d, eta, eps) -> np.ndarray:
    """Batch of 3x3 maps E with de = E @ omega (world angular velocity)."""
    eye = np.eye(3)
    a = eta_d[:, None, None] * eye + _skew_batch(eps_d)
    b = eta[:, None, None] * eye - _skew_batch(eps)
    return 0.5 * (np.einsum("ni,nj->nij", eps_d, eps) + a @ b)


class _CondensedOCP:
    """Exact condensation of the shooting states onto the control sequence.

    With nodes x_k and flat controls v (v[6j + i] = u_j[i]):
        q_k  = q0 + k*dt*qd0 + (Sq[k, :] kron I6) v
        qd_k = qd0 + (Sqd[k, :] kron I6) v
    """

    def __init__(self, cfg: OCPConfig, model: RobotModel, x0: RobotStateVec, ref: ReferenceTrajectory):
        h, dt = cfg.horizon, cfg.dt
        self.cfg, self.model, self.x0, self.ref = cfg, model, x0, ref
        self.h = h
        self.nv = 6 * h
        ks = np.arange(h + 1)
        self.sq = np.zeros((h + 1, h))
        self.sqd = np.zeros((h + 1, h))
        for k in range(h + 1):
            for j in range(k):
                self.sq[k, j] = dt * dt * (k - j - 0.5)
                self.sqd[k, j] = dt
        self.q_free = x0.q[None, :] + (ks * dt)[:, None] * x0.qd[None, :]  # (H+1, 6)
        self.sp = np.sqrt(dt * np.asarray(cfg.w_pos))
        self.so = np.sqrt(dt * np.asarray(cfg.w_ori))
        self.sv = np.sqrt(dt * np.asarray(cfg.w_vel))
        self.sa = np.sqrt(dt * np.asarray(cfg.w_acc))
        self.ref_p = np.asarray(ref.positions, dtype=float)
        ref_o = np.asarray(ref.orientations, dtype=float)
        ref_o = ref_o / np.linalg.norm(ref_o, axis=1, keepdims=True)
        flip = ref_o[:, 0] < 0.0
        ref_o[flip] = -ref_o[flip]
        self.ref_o = ref_o
        self.base_rot = model.base.rot
        self.base_pos = model.base.pos
        self._j_acc = np.diag(np.tile(self.sa, h))

    def rollout(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = v.reshape(self.h, 6)
        qs = self.q_free + self.sq @ u
        qds = self.x0.qd[None, :] + self.sqd @ u
        return qs, qds

    def residual(self, v: np.ndarray, with_jacobian: bool):
        """Stacked weighted residuals, group-major: position rows (3H), then
        orientation (3H), velocity (6H), acceleration (6H)."""
        qs, qds = self.rollout(v)
        h = self.h
        pos, rot, jp, jw = kinematics.fk_batch(self.model, qs[:h])
        pos_w = pos @ self.base_rot.T + self.base_pos
        u = v.reshape(h, 6)
        quats = _quat_from_rotation_batch(self.base_rot[None] @ rot)
        eta_d, eps_d = self.ref_o[:h, 0], self.ref_o[:h, 1:]
        eta, eps = quats[:, 0], quats[:, 1:]
        errs = eta_d[:, None] * eps - eta[:, None] * eps_d + np.cross(eps_d, eps)
        r = np.concatenate([
            (self.sp * (pos_w - self.ref_p[:h])).reshape(-1),
            (self.so * errs).reshape(-1),
            (self.sv * qds[:h]).reshape(-1),
            (self.sa * u).reshape(-1),
        ])
        if not with_jacobian:
            return r
        gp = self.sp[None, :, None] * (self.base_rot[None] @ jp)  # (H, 3, 6)
        emaps = _quat_error_map_batch(eta_d, eps_d, eta, eps)
        go = self.so[None, :, None] * (emaps @ (self.base_rot[None] @ jw))
        sq_h = self.sq[:h]
        sqd_h = self.sqd[:h]
        j_pos = (sq_h[:, None, :, None] * gp[:, :, None, :]).reshape(3 * h, self.nv)
        j_ori = (sq_h[:, None, :, None] * go[:, :, None, :]).reshape(3 * h, self.nv)
        j_vel = (sqd_h[:, None, :, None] * np.diag(self.sv)[None, :, None, :]).reshape(6 * h, self.nv)
        jac = np.vstack([j_pos, j_ori, j_vel, self._j_acc])
        return r, jac

    def objective(self, v: np.ndarray) -> float:
        r = self.residual(v, with_jacobian=False)
        return float(r @ r)

    def gradient(self, v: np.ndarray) -> np.ndarray:
        r, jac = self.residual(v, with_jacobian=True)
        return 2.0 * (jac.T @ r)

    def constraints(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows (A, b) with A v <= b covering q/qd bounds at nodes 1..H and
        control bounds at every step."""
        m = self.model
        h = self.h
        eye6 = np.eye(6)
        blocks_a, blocks_b = [], []
        for k in range(1, h + 1):
            sq_row = np.kron(self.sq[k], eye6)
            sqd_row = np.kron(self.sqd[k], eye6)
            blocks_a += [sq_row, -sq_row, sqd_row, -sqd_row]
            blocks_b += [
                m.q_max - self.q_free[k],
                self.q_free[k] - m.q_min,
                m.qd_max - self.x0.qd,
                self.x0.qd - m.qd_min,
            ]
        eye = np.eye(self.nv)
        blocks_a += [eye, -eye]
        blocks_b += [np.tile(m.u_max, h), -np.tile(m.u_min, h)]
        return np.vstack(blocks_a), np.concatenate(blocks_b)

    def bounds_violation(self, v: np.ndarray) -> float:
        """Worst box-bound excess over all nodes (0 when feasible)."""
        qs, qds = self.rollout(v)
        m = self.model
        u = v.reshape(self.h, 6)
        worst = max(
            float(np.max(qs - m.q_max)), float(np.max(m.q_min - qs)),
            float(np.max(qds - m.qd_max)), float(np.max(m.qd_min - qds)),
            float(np.max(u - m.u_max)), float(np.max(m.u_min - u)),
        )
        return max(worst, 0.0)

    def greedy_clamp(self, v_init: np.ndarray) -> np.ndarray:
        """One-step projection of each control onto the box preimage of the
        next node's bounds (joints are decoupled). Good at patching a shifted
        warm start's tail; not guaranteed to succeed when multi-step braking
        is needed."""
        m = self.model
        dt = self.cfg.dt
        u = v_init.reshape(self.h, 6).copy()
        q, qd = self.x0.q.copy(), self.x0.qd.copy()
        for k in range(self.h):
            lo = np.maximum(m.u_min, (m.qd_min - qd) / dt)
            hi = np.minimum(m.u_max, (m.qd_max - qd) / dt)
            lo = np.maximum(lo, 2.0 * (m.q_min - q - dt * qd) / (dt * dt))
            hi = np.minimum(hi, 2.0 * (m.q_max - q - dt * qd) / (dt * dt))
            bad = lo > hi
            if np.any(bad):
                mid = np.clip(0.5 * (lo[bad] + hi[bad]), m.u_min[bad], m.u_max[bad])
                lo[bad] = mid
                hi[bad] = mid
            u[k] = np.clip(u[k], lo, hi)
            q = q + dt * qd + 0.5 * dt * dt * u[k]
            qd = qd + dt * u[k]
        return u.reshape(-1)

    def braking_controls(self) -> np.ndarray:
        """Brake every joint to rest, then hold.

        Feasible whenever x0 lies inside the braking envelope (the state set
        from which full braking stops before the position limits); the exact
        discretization rides the envelope boundary without crossing it.
        """
        m = self.model
        dt = self.cfg.dt
        u = np.zeros((self.h, 6))
        qd = self.x0.qd.copy()
        for k in range(self.h):
            u[k] = np.clip(-qd / dt, m.u_min, m.u_max)
            qd = qd + dt * u[k]
        return u.reshape(-1)

    def feasible_controls(self, v_init: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, bool]:
        """Find a bound-satisfying control sequence near v_init.

        Tries the greedy clamp of v_init, then of zero controls, then the
        pure braking sequence. Returns (controls, ok); ok False means even
        braking violates (the initial state is dynamically doomed) and the
        best effort is returned.
        """
        candidates = [self.greedy_clamp(v_init), self.greedy_clamp(np.zeros(self.nv)), self.braking_controls()]
        best = None
        for cand in candidates:
            excess = self.bounds_violation(cand)
            if excess <= tol:
                return cand, True
            if best is None or excess < best[1]:
                best = (cand, excess)
        return best[0], False


_FTOL = 1e-6  # relative cost-progress stop for the linear Gauss-Newton tail


def _gauss_newton_backend(ocp: _CondensedOCP, v0: np.ndarray) -> tuple[np.ndarray, SolveStats]:
    from .qp import solve_qp

    cfg = ocp.cfg
    t_start = time.perf_counter()
    v, feas_ok = ocp.feasible_controls(v0)
    cost_trace = [ocp.objective(v)]
    if not feas_ok:
        # dynamically doomed start: no feasible point exists, skip the QP and
        # return the braking best effort flagged as not converged
        stats = SolveStats(iterations=0, solve_ms=(time.perf_counter() - t_start) * 1e3,
                           converged=False, kkt_residual=np.inf, cost_trace=tuple(cost_trace))
        return v, stats
    a_mat, b_vec = ocp.constraints()
    converged = False
    kkt = np.inf
    iters = 0
    warm_set = None
    damping = 0.0  # Levenberg term; grows when steps get rejected
    stall = 0
    for iters in range(1, cfg.max_iterations + 1):
        r, jac = ocp.residual(v, with_jacobian=True)
        grad = 2.0 * (jac.T @ r)
        gn = 2.0 * (jac.T @ jac)
        scale = max(float(np.trace(gn)) / gn.shape[0], 1e-12)
        f0 = cost_trace[-1]
        accepted = False
        for _ in range(8):
            hess = gn + (damping * scale + 1e-10) * np.eye(ocp.nv)
            qp = solve_qp(hess, grad, a_mat, b_vec - a_mat @ v, np.zeros(ocp.nv), warm_set=warm_set)
            d = qp.x
            warm_set = qp.active
            # KKT stationarity residual of the NLP at v with the QP
            # multipliers, scaled by the gradient magnitude
            kkt = float(np.linalg.norm(hess @ d, np.inf)) / max(1.0, float(np.linalg.norm(grad, np.inf)))
            if kkt <= cfg.tol_stationarity or np.linalg.norm(d, np.inf) <= cfg.tol_stationarity:
                converged = True
                break
            predicted = -(grad @ d + 0.5 * (d @ hess @ d))
            if predicted <= _FTOL * max(f0, 1e-12):
                # the constrained quadratic model cannot improve the cost by
                # more than a relative _FTOL: numerically stationary
                converged = True
                break
            f_new = ocp.objective(v + d)
            if f_new < f0:
                # gain-ratio damping update (Levenberg-Marquardt style); the
                # dropped curvature term makes plain Gauss-Newton overshoot
                # while residuals stay large
                rho = (f0 - f_new) / max(predicted, 1e-300)
                if rho > 0.75:
                    damping *= 0.7
                    if damping < 1e-6:
                        damping = 0.0
                elif rho < 0.25:
                    damping = min(damping * 3.0 + 1e-4, 1e3)
                v = v + d
                cost_trace.append(f_new)
                accepted = True
                break
            damping = min(damping * 10.0 + 1e-3, 1e3)
        if converged or not accepted:
            break
        # accept the iterate once relative cost progress stalls (Gauss-Newton
        # converges only linearly when residuals stay large)
        stall = stall + 1 if f0 - cost_trace[-1] <= _FTOL * max(f0, 1e-12) else 0
        if stall >= 2:
            converged = True
            break
    stats = SolveStats(
        iterations=iters,
        solve_ms=(time.perf_counter() - t_start) * 1e3,
        converged=converged,
        kkt_residual=kkt,
        cost_trace=tuple(cost_trace),
    )
    return v, stats


def solve(cfg: OCPConfig, model: RobotModel, x0: RobotStateVec, ref: ReferenceTrajectory,
          warm: PlannedTrajectory | None = None, backend=None) -> PlannedTrajectory:
    """Solve one OCP instance; warm starts shift the previous solution by one
    step and repeat the last control. backend defaults to the Gauss-Newton
    SQP; any callable (ocp, v0) -> (controls, stats) can be swapped in."""
    if ref.positions.shape[0] != cfg.horizon + 1:
        raise ValueError(f"reference must have {cfg.horizon + 1} samples, got {ref.positions.shape[0]}")
    if abs(ref.dt - cfg.dt) > 1e-12:
        raise ValueError("reference sample period does not match the OCP dt")
    tol = cfg.tol_constraint
    if (np.any(x0.q < model.q_min - tol) or np.any(x0.q > model.q_max + tol)
            or np.any(x0.qd < model.qd_min - tol) or np.any(x0.qd > model.qd_max + tol)):
        raise InfeasibleStartError("initial state violates joint box bounds")
    if warm is not None:
        v0 = np.vstack([warm.controls[1:], warm.controls[-1:]]).reshape(-1)
    else:
        v0 = np.zeros(6 * cfg.horizon)
    ocp = _CondensedOCP(cfg, model, x0, ref)
    if backend is None:
        backend = _gauss_newton_backend
    v, stats = backend(ocp, v0)
    qs, qds = ocp.rollout(v)
    return PlannedTrajectory(qs=qs, qds=qds, controls=v.reshape(cfg.horizon, 6),
                             cost=float(ocp.objective(v)), stats=stats)


def shift_plan(plan: PlannedTrajectory, dt: float, model: RobotModel) -> PlannedTrajectory:
    """Advance a plan by one period: drop the first node and extend the tail
    by one exact dynamics step under a braking control (safest extension when
    the tail ends in motion)."""
    u_last = np.clip(-plan.qds[-1] / dt, model.u_min, model.u_max)
    controls = np.vstack([plan.controls[1:], u_last[None, :]])
    qs = np.vstack([plan.qs[1:], plan.qs[-1] + dt * plan.qds[-1] + 0.5 * dt * dt * u_last])
    qds = np.vstack([plan.qds[1:], plan.qds[-1] + dt * u_last])
    return replace(plan, qs=qs, qds=qds, controls=controls)


class MpcPlanner:
    """Stateful planner: predicts the operator reference from the last two
    desired poses, then solves with a warm start from the previous plan.

    Desired poses are world-frame; the reach sphere used for reference
    clipping is centered at the shoulder. When a solve fails to converge the
    previous plan, shifted by one period, is returned for execution.
    """

    def __init__(self, cfg: OCPConfig, model: RobotModel, sample_dt: float | None = None):
        self.cfg = cfg
        self.model = model
        self.sample_dt = cfg.dt if sample_dt is None else sample_dt
        self._reach = kinematics.max_reach(model)
        self._center = model.base.apply(kinematics.reach_center(model))
        self._prev_desired: Transform | None = None
        self._last_plan: PlannedTrajectory | None = None
        self.last_reference: ReferenceTrajectory | None = None

    def reset(self):
        self._prev_desired = None
        self._last_plan = None
        self.last_reference = None

    @property
    def last_plan(self) -> PlannedTrajectory | None:
        return self._last_plan

    def step(self, x0: RobotStateVec, desired: Transform) -> PlannedTrajectory:
        """One MPC cycle: predict, then solve with a warm start."""
        prev = self._prev_desired if self._prev_desired is not None else desired
        ref = prediction.predict(prev, desired, self.sample_dt, self.cfg.horizon,
                                 self.cfg.dt, self._center, self._reach)
        plan = solve(self.cfg, self.model, x0, ref, warm=self._last_plan)
        self._prev_desired = desired
        self.last_reference = ref
        if not plan.stats.converged and self._last_plan is not None:
            plan = replace(shift_plan(self._last_plan, self.cfg.dt, self.model), stats=plan.stats)
        self._last_plan = plan
        return plan
