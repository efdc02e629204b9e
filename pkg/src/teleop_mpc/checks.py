"""Self-contained oracle suites, runnable from the CLI (`check --suite ...`).

Each oracle takes an independent route to a result the main implementation
must reproduce:

  fk         explicit 4x4 homogeneous D-H matrix chain vs forward_kinematics
  gradients  central finite differences vs the planner's analytic objective
             gradient
  retarget   a naive per-sample replay of the clutch algorithm on raw
             homogeneous matrices (full recomputation, numpy matrix inverse,
             inline strategy resolution) vs the event-sourced state machine

The suites use seeded RNGs and are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry, kinematics, prediction
from .geometry import Transform
from .kinematics import RobotModel
from .planner import OCPConfig, RobotStateVec, _CondensedOCP, world_ee
from .retarget import RetargetConfig, Retargeter


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# forward kinematics oracle

def fk_oracle_matrix(model: RobotModel, q) -> np.ndarray:
    """End-effector pose in {0_M} as a plain 4x4 homogeneous matrix product."""
    q = np.asarray(q, dtype=float).reshape(6)
    t = np.eye(4)
    for row, qi in zip(model.dh, q):
        th = qi + row.theta_offset
        ct, st = math.cos(th), math.sin(th)
        ca, sa = math.cos(row.alpha), math.sin(row.alpha)
        a_mat = np.array(
            [
                [ct, -st * ca, st * sa, row.a * ct],
                [st, ct * ca, -ct * sa, row.a * st],
                [0.0, sa, ca, row.d],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        t = t @ a_mat
    return t


ZERO_CONFIG_POSITION = np.array([-0.8172, -0.2329, 0.0628])  # a2+a3, -(d4+d6), d1-d5


def fk_suite(samples: int = 1000, seed: int = 0) -> SuiteResult:
    model = kinematics.ur5e()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        q = rng.uniform(-math.pi, math.pi, 6)
        fk = kinematics.forward_kinematics(model, q)
        ref = fk_oracle_matrix(model, q)
        worst = max(worst, float(np.abs(fk.matrix() - ref).max()))
    zero_pos = kinematics.forward_kinematics(model, np.zeros(6)).pos
    zero_err = float(np.abs(zero_pos - ZERO_CONFIG_POSITION).max())
    passed = worst <= 1e-12 and zero_err <= 1e-4
    return SuiteResult(
        "fk", passed,
        f"max |FK - oracle| = {worst:.3e} over {samples} configs; zero-config error {zero_err:.3e} m",
    )


# ---------------------------------------------------------------------------
# planner gradient oracle

def gradient_suite(samples: int = 100, seed: int = 0, step: float = 1e-6,
                   tol: float = 1e-5) -> SuiteResult:
    model = kinematics.ur5e()
    cfg = OCPConfig()
    rng = np.random.default_rng(seed)
    home = np.array([0.0, -math.pi / 2, math.pi / 2, -math.pi / 2, -math.pi / 2, 0.0])
    worst = 0.0
    for _ in range(samples):
        x0 = RobotStateVec(home + rng.normal(0.0, 0.3, 6), rng.normal(0.0, 0.4, 6))
        ee = world_ee(model, x0.q)
        target = Transform(ee.rot @ geometry.rot_z(rng.normal(0.0, 0.3)),
                           ee.pos + rng.normal(0.0, 0.05, 3))
        ref = prediction.predict(ee, target, cfg.dt, cfg.horizon, cfg.dt,
                                 kinematics.reach_center(model), kinematics.max_reach(model))
        ocp = _CondensedOCP(cfg, model, x0, ref)
        v = rng.normal(0.0, 1.0, ocp.nv)
        grad = ocp.gradient(v)
        for i in range(ocp.nv):
            vp = v.copy()
            vm = v.copy()
            vp[i] += step
            vm[i] -= step
            fd = (ocp.objective(vp) - ocp.objective(vm)) / (2.0 * step)
            rel = abs(grad[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, rel)
    return SuiteResult(
        "gradients", worst < tol,
        f"max relative gradient error {worst:.3e} over {samples} random decision vectors (tol {tol:g})",
    )


# ---------------------------------------------------------------------------
# clutch algorithm oracle

def _mat(rot: np.ndarray, pos: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = pos
    return m


class NaiveClutchReplay:
    """Per-sample replay of the clutch retargeting loop on raw 4x4 matrices.

    Nothing is cached: displacements and the desired pose are recomputed from
    the stored frame matrices at every step, inverses go through
    numpy.linalg.inv, and strategy resolution is inlined. Frame leveling for
    the upright strategy is delegated to geometry.upright (it is oracle-tested
    separately); everything else is an independent arithmetic path.
    """

    def __init__(self, cfg: RetargetConfig, device0: np.ndarray, ee0: np.ndarray):
        self.cfg = cfg
        self.clutch = False
        self.calib_input = cfg.input_translation.rotation if cfg.input_translation.kind == "calibrated_fixed" else np.eye(3)
        self.calib_robot = cfg.robot_translation.rotation if cfg.robot_translation.kind == "calibrated_fixed" else np.eye(3)
        self.t_0i_ti = _mat(self._choose(cfg.input_translation, self.calib_input, device0[:3, :3], np.eye(3)), device0[:3, 3])
        self.t_0i_ri = _mat(self._choose(cfg.input_rotation, self._payload(cfg.input_rotation), device0[:3, :3], np.eye(3)), device0[:3, 3])
        self.t_0m_tm = _mat(self._choose(cfg.robot_translation, self.calib_robot, ee0[:3, :3], ee0[:3, :3]), ee0[:3, 3])
        self.t_0m_rm = _mat(self._choose(cfg.robot_rotation, self._payload(cfg.robot_rotation), ee0[:3, :3], ee0[:3, :3]), ee0[:3, 3])
        self.t_ti_d = np.eye(4)
        self.t_ri_d = np.eye(4)

    @staticmethod
    def _payload(strategy) -> np.ndarray:
        return strategy.rotation if strategy.kind == "calibrated_fixed" else np.eye(3)

    @staticmethod
    def _choose(strategy, calibrated, observed, previous) -> np.ndarray:
        if strategy.kind == "calibrated_fixed":
            return calibrated
        if strategy.kind == "world_identity":
            return np.eye(3)
        if strategy.kind in ("device_at_clutch", "ee_at_release"):
            return observed
        try:
            return geometry.upright(observed)
        except geometry.SingularOrientationError:
            return previous

    def desired(self) -> np.ndarray:
        rot = self.t_0m_rm[:3, :3] @ self.t_ri_d[:3, :3]
        pos = self.t_0m_tm[:3, 3] + self.t_0m_tm[:3, :3] @ self.t_ti_d[:3, 3]
        return _mat(rot, pos)

    def step(self, device: np.ndarray, clutch: bool) -> np.ndarray:
        cfg = self.cfg
        if clutch and not self.clutch:
            if cfg.mode == "relative":
                self.t_0i_ti = _mat(self._choose(cfg.input_translation, self.calib_input, device[:3, :3],
                                                 self.t_0i_ti[:3, :3]), device[:3, 3])
                self.t_0i_ri = _mat(self._choose(cfg.input_rotation, self._payload(cfg.input_rotation),
                                                 device[:3, :3], self.t_0i_ri[:3, :3]), device[:3, 3])
            self.clutch = True
        elif not clutch and self.clutch:
            if cfg.mode == "relative":
                release = self.desired()
                self.t_0m_tm = _mat(self._choose(cfg.robot_translation, self.calib_robot, release[:3, :3],
                                                 self.t_0m_tm[:3, :3]), release[:3, 3])
                self.t_0m_rm = _mat(self._choose(cfg.robot_rotation, self._payload(cfg.robot_rotation),
                                                 release[:3, :3], self.t_0m_rm[:3, :3]), release[:3, 3])
                self.t_ti_d = np.eye(4)
                self.t_ri_d = np.eye(4)
            self.clutch = False
        if self.clutch:
            self.t_ti_d = np.linalg.inv(self.t_0i_ti) @ device
            self.t_ri_d = np.linalg.inv(self.t_0i_ri) @ device
        return self.desired()


def _random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    return geometry.rotation_from_quat(q / np.linalg.norm(q))


def _trace_configs() -> list[RetargetConfig]:
    from . import retarget as rt

    return [
        RetargetConfig(
            input_translation=rt.calibrated_fixed(np.eye(3)),
            input_rotation=rt.device_at_clutch(),
            robot_translation=rt.calibrated_fixed(geometry.rot_z(math.pi)),
            robot_rotation=rt.upright_at_release(),
        ),
        RetargetConfig(
            input_translation=rt.world_identity(),
            input_rotation=rt.device_at_clutch(),
            robot_translation=rt.world_identity(),
            robot_rotation=rt.ee_at_release(),
        ),
        RetargetConfig(
            mode="absolute",
            input_translation=rt.calibrated_fixed(geometry.rot_x(0.3)),
            input_rotation=rt.calibrated_fixed(geometry.rot_y(-0.4)),
            robot_translation=rt.calibrated_fixed(np.eye(3)),
            robot_rotation=rt.calibrated_fixed(geometry.rot_z(0.7)),
        ),
    ]


def retarget_suite(steps: int = 10000, seed: int = 0, tol: float = 1e-9) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for cfg in _trace_configs():
        ee0 = Transform(_random_rotation(rng), rng.normal(0.0, 0.3, 3))
        machine = Retargeter(cfg, geometry.identity(), ee0, input_filter=None)
        naive = NaiveClutchReplay(cfg, np.eye(4), _mat(ee0.rot, ee0.pos))
        pos = np.zeros(3)
        rot = np.eye(3)
        clutch = False
        for _ in range(steps):
            pos = pos + rng.normal(0.0, 0.02, 3)
            step_rot = geometry.rot_x(rng.normal(0.0, 0.05)) @ geometry.rot_y(rng.normal(0.0, 0.05)) @ geometry.rot_z(rng.normal(0.0, 0.05))
            rot = rot @ step_rot
            if rng.uniform() < 0.02:
                clutch = not clutch
            got = machine.process(Transform(rot, pos), clutch)
            want = naive.step(_mat(rot, pos), clutch)
            worst = max(worst, float(np.abs(got.matrix() - want).max()))
    return SuiteResult(
        "retarget", worst <= tol,
        f"max pose discrepancy {worst:.3e} vs naive replay over {steps}-step traces x {len(_trace_configs())} configs",
    )


SUITES = {"fk": fk_suite, "gradients": gradient_suite, "retarget": retarget_suite}


def run_suite(name: str) -> SuiteResult:
    try:
        return SUITES[name]()
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; available: {sorted(SUITES)}") from None
