"""Deterministic closed-loop harness.

One simulator tick ingests due input samples, runs the retargeting
transitions, re-plans at the (slower) planning rate, and steps the plant by
the exact discrete dynamics along the active plan's first control interval.
The plant is model-matched and disturbance-free: it executes exactly what
the planner predicted, so the only reference-to-plant lag left is the share
induced by the planning rate and the input filter.

Scenario files are versioned JSON with unit-suffixed field names; logs are
fixed-column CSV (9 significant digits) with an optional JSON-lines mirror.
Runs are bit-deterministic except the measured solve_ms column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import geometry, kinematics, retarget
from .geometry import Transform
from .kinematics import RobotModel
from .planner import MpcPlanner, OCPConfig, RobotStateVec

SCENARIO_VERSION = 1


class ScenarioInvalid(ValueError):
    """Scenario validation failure; carries the first violated field."""

    def __init__(self, field_name: str, reason: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {reason}")


@dataclass(frozen=True)
class InputSample:
    t: float
    pos: np.ndarray
    quat: np.ndarray  # (w, x, y, z)
    clutch: bool

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))
        object.__setattr__(self, "quat", np.asarray(self.quat, dtype=float).reshape(4))

    def pose(self) -> Transform:
        return Transform(geometry.rotation_from_quat(self.quat), self.pos)


@dataclass(frozen=True)
class FilterConfig:
    enabled: bool = True
    pos_alpha: float = 0.2
    rot_alpha: float = 0.2

    def build(self) -> retarget.InputFilter | None:
        return retarget.InputFilter(self.pos_alpha, self.rot_alpha) if self.enabled else None


@dataclass(frozen=True)
class Rates:
    input_hz: float = 100.0
    plan_hz: float = 10.0
    sim_hz: float = 100.0


@dataclass(frozen=True)
class Scenario:
    name: str
    robot: RobotModel
    ocp: OCPConfig
    retarget_cfg: retarget.RetargetConfig
    input_filter: FilterConfig
    rates: Rates
    duration: float
    initial_q: np.ndarray
    input_stream: tuple[InputSample, ...]
    robot_preset: str | None = "ur5e"

    def __post_init__(self):
        object.__setattr__(self, "initial_q", np.asarray(self.initial_q, dtype=float).reshape(6))
        object.__setattr__(self, "input_stream", tuple(self.input_stream))


def validate_scenario(s: Scenario) -> None:
    for name in ("input_hz", "plan_hz", "sim_hz"):
        if getattr(s.rates, name) <= 0:
            raise ScenarioInvalid(f"rates.{name}", "must be positive")
    if s.rates.plan_hz > s.rates.sim_hz:
        raise ScenarioInvalid("rates.plan_hz", "must not exceed sim_hz")
    ratio = s.rates.sim_hz / s.rates.plan_hz
    if abs(ratio - round(ratio)) > 1e-9:
        raise ScenarioInvalid("rates.sim_hz", "must be an integer multiple of plan_hz")
    if s.duration <= 0:
        raise ScenarioInvalid("duration_s", "must be positive")
    if abs(s.ocp.dt * s.rates.plan_hz - 1.0) > 1e-9:
        raise ScenarioInvalid("ocp.dt_s", "must equal 1/plan_hz")
    last = -np.inf
    for i, sample in enumerate(s.input_stream):
        if sample.t <= last:
            raise ScenarioInvalid(f"input_stream[{i}].t_s", "timestamps must be strictly increasing")
        last = sample.t
        if abs(np.linalg.norm(sample.quat) - 1.0) > 1e-6:
            raise ScenarioInvalid(f"input_stream[{i}].quat_wxyz", "must be unit norm")


@dataclass(frozen=True)
class CalibrateEvent:
    """Re-orient the calibrated translation frames (tick-synchronous)."""

    r_input: np.ndarray
    r_robot: np.ndarray


@dataclass(frozen=True)
class SetModeEvent:
    """Swap the retargeting configuration at the tick boundary."""

    cfg: retarget.RetargetConfig


@dataclass(frozen=True)
class LogRecord:
    t: float
    q: np.ndarray
    qd: np.ndarray
    ee: Transform
    desired: Transform
    ref0: np.ndarray  # reference position at horizon start
    clutch: bool
    solve_ms: float
    solve_iters: int
    cost: float
    converged: bool


def step_plant(x: RobotStateVec, u, dt: float) -> RobotStateVec:
    """Exact discrete double-integrator step, per joint."""
    u = np.asarray(u, dtype=float).reshape(6)
    return RobotStateVec(x.q + dt * x.qd + 0.5 * dt * dt * u, x.qd + dt * u)


class TeleopLoop:
    """Retarget -> predict/plan -> plant pipeline shared by run_scenario and
    the live session host. Strictly deterministic given tick times and
    samples; wall time never enters the control flow."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.model = scenario.robot
        self.dt_sim = 1.0 / scenario.rates.sim_hz
        self.ticks_per_plan = int(round(scenario.rates.sim_hz / scenario.rates.plan_hz))
        self.reset()

    def reset(self):
        s = self.scenario
        self.x = RobotStateVec(s.initial_q, np.zeros(6))
        ee0 = kinematics.forward_kinematics(self.model, s.initial_q)
        self.retargeter = retarget.Retargeter(s.retarget_cfg, geometry.identity(), ee0,
                                              input_filter=s.input_filter.build())
        self.planner = MpcPlanner(s.ocp, self.model, sample_dt=1.0 / s.rates.plan_hz)
        self.plan = None
        self.tick_index = 0

    def set_retarget_config(self, cfg: retarget.RetargetConfig):
        self.retargeter.set_config(cfg)

    def desired_world(self) -> Transform:
        return geometry.compose(self.model.base, self.retargeter.desired())

    def ee_world(self) -> Transform:
        return geometry.compose(self.model.base, kinematics.forward_kinematics(self.model, self.x.q))

    def tick(self, events: tuple = ()) -> LogRecord:
        t = self.tick_index * self.dt_sim
        for ev in events:
            if isinstance(ev, InputSample):
                self.retargeter.process(ev.pose(), ev.clutch)
            elif isinstance(ev, CalibrateEvent):
                self.retargeter.calibrate(ev.r_input, ev.r_robot)
            elif isinstance(ev, SetModeEvent):
                self.retargeter.set_config(ev.cfg)
            else:
                raise TypeError(f"unknown tick event {type(ev).__name__}")
        if self.tick_index % self.ticks_per_plan == 0:
            self.plan = self.planner.step(self.x, self.desired_world())
        self.x = step_plant(self.x, self.plan.controls[0], self.dt_sim)
        stats = self.plan.stats
        record = LogRecord(
            t=t,
            q=self.x.q.copy(),
            qd=self.x.qd.copy(),
            ee=self.ee_world(),
            desired=self.desired_world(),
            ref0=self.planner.last_reference.positions[0].copy(),
            clutch=self.retargeter.engaged,
            solve_ms=stats.solve_ms,
            solve_iters=stats.iterations,
            cost=self.plan.cost,
            converged=stats.converged,
        )
        self.tick_index += 1
        return record

    def planned_path_world(self) -> np.ndarray:
        """(H+1, 3) end-effector positions along the active plan."""
        pos, _, _, _ = kinematics.fk_batch(self.model, self.plan.qs)
        return pos @ self.model.base.rot.T + self.model.base.pos

    def link_poses_world(self) -> list[Transform]:
        frames = kinematics.link_frames(self.model, self.x.q)
        return [geometry.compose(self.model.base, f) for f in frames]


def run_scenario(scenario: Scenario) -> list[LogRecord]:
    """Replay a scripted input stream through the closed loop."""
    validate_scenario(scenario)
    loop = TeleopLoop(scenario)
    n_ticks = int(round(scenario.duration * scenario.rates.sim_hz))
    stream = scenario.input_stream
    cursor = 0
    records = []
    for i in range(n_ticks):
        t = i * loop.dt_sim
        due = []
        while cursor < len(stream) and stream[cursor].t <= t + 1e-12:
            due.append(stream[cursor])
            cursor += 1
        records.append(loop.tick(tuple(due)))
    return records


# ---------------------------------------------------------------------------
# serialization

CSV_COLUMNS = (
    ["t_s"]
    + [f"q{i}_rad" for i in range(6)]
    + [f"qd{i}_rad_s" for i in range(6)]
    + ["ee_px_m", "ee_py_m", "ee_pz_m", "ee_qw", "ee_qx", "ee_qy", "ee_qz"]
    + ["des_px_m", "des_py_m", "des_pz_m", "des_qw", "des_qx", "des_qy", "des_qz"]
    + ["ref_px_m", "ref_py_m", "ref_pz_m"]
    + ["clutch", "solve_ms", "solve_iters", "cost", "converged"]
)


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def record_row(r: LogRecord) -> list[str]:
    ee_q = geometry.quat_from_rotation(r.ee.rot)
    des_q = geometry.quat_from_rotation(r.desired.rot)
    vals = (
        [r.t] + list(r.q) + list(r.qd)
        + list(r.ee.pos) + list(ee_q)
        + list(r.desired.pos) + list(des_q)
        + list(r.ref0)
    )
    return [_fmt(v) for v in vals] + [
        str(int(r.clutch)), _fmt(r.solve_ms), str(int(r.solve_iters)), _fmt(r.cost), str(int(r.converged)),
    ]


def write_csv(records: list[LogRecord], path) -> None:
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            f.write(",".join(record_row(r)) + "\n")


def write_jsonl(records: list[LogRecord], path) -> None:
    with open(path, "w") as f:
        for r in records:
            row = dict(zip(CSV_COLUMNS, record_row(r)))
            f.write(json.dumps(row) + "\n")


def _transform_to_json(t: Transform) -> dict:
    return {"pos_m": list(map(float, t.pos)), "quat_wxyz": list(map(float, geometry.quat_from_rotation(t.rot)))}


def _transform_from_json(obj) -> Transform:
    quat = np.asarray(obj["quat_wxyz"], dtype=float)
    return Transform(geometry.rotation_from_quat(quat / np.linalg.norm(quat)), obj["pos_m"])


def _strategy_to_json(st: retarget.Strategy) -> dict:
    out = {"kind": st.kind}
    if st.kind == "calibrated_fixed":
        out["rotation_quat_wxyz"] = list(map(float, geometry.quat_from_rotation(st.rotation)))
    return out


def _strategy_from_json(obj, field_name: str) -> retarget.Strategy:
    try:
        kind = obj["kind"]
        if kind == "calibrated_fixed":
            quat = np.asarray(obj.get("rotation_quat_wxyz", [1.0, 0.0, 0.0, 0.0]), dtype=float)
            return retarget.Strategy(kind, geometry.rotation_from_quat(quat / np.linalg.norm(quat)))
        return retarget.Strategy(kind)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(field_name, str(exc)) from None


def robot_to_json(model: RobotModel) -> dict:
    return {
        "name": model.name,
        "dh": [
            {"a_m": r.a, "d_m": r.d, "alpha_rad": r.alpha, "theta_offset_rad": r.theta_offset}
            for r in model.dh
        ],
        "q_min_rad": list(map(float, model.q_min)),
        "q_max_rad": list(map(float, model.q_max)),
        "qd_min_rad_s": list(map(float, model.qd_min)),
        "qd_max_rad_s": list(map(float, model.qd_max)),
        "u_min_rad_s2": list(map(float, model.u_min)),
        "u_max_rad_s2": list(map(float, model.u_max)),
        "base": _transform_to_json(model.base),
    }


def robot_from_json(obj) -> RobotModel:
    if isinstance(obj, str):
        try:
            return kinematics.preset(obj)
        except KeyError as exc:
            raise ScenarioInvalid("robot", str(exc)) from None
    try:
        dh = tuple(
            kinematics.DHRow(row["a_m"], row["d_m"], row["alpha_rad"], row.get("theta_offset_rad", 0.0))
            for row in obj["dh"]
        )
        return RobotModel(
            dh=dh,
            q_min=obj["q_min_rad"],
            q_max=obj["q_max_rad"],
            qd_min=obj["qd_min_rad_s"],
            qd_max=obj["qd_max_rad_s"],
            u_min=obj["u_min_rad_s2"],
            u_max=obj["u_max_rad_s2"],
            base=_transform_from_json(obj["base"]) if "base" in obj else geometry.identity(),
            name=obj.get("name", "custom"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid("robot", str(exc)) from None


def scenario_to_json(s: Scenario) -> dict:
    return {
        "version": SCENARIO_VERSION,
        "name": s.name,
        "robot": s.robot_preset if s.robot_preset else robot_to_json(s.robot),
        "ocp": {
            "horizon_steps": s.ocp.horizon,
            "dt_s": s.ocp.dt,
            "w_pos": list(s.ocp.w_pos),
            "w_ori": list(s.ocp.w_ori),
            "w_vel": list(s.ocp.w_vel),
            "w_acc": list(s.ocp.w_acc),
            "max_iterations": s.ocp.max_iterations,
            "tol_stationarity": s.ocp.tol_stationarity,
            "tol_constraint": s.ocp.tol_constraint,
        },
        "retarget": {
            "mode": s.retarget_cfg.mode,
            "input_translation": _strategy_to_json(s.retarget_cfg.input_translation),
            "input_rotation": _strategy_to_json(s.retarget_cfg.input_rotation),
            "robot_translation": _strategy_to_json(s.retarget_cfg.robot_translation),
            "robot_rotation": _strategy_to_json(s.retarget_cfg.robot_rotation),
        },
        "input_filter": {
            "enabled": s.input_filter.enabled,
            "pos_alpha": s.input_filter.pos_alpha,
            "rot_alpha": s.input_filter.rot_alpha,
        },
        "rates_hz": {"input": s.rates.input_hz, "plan": s.rates.plan_hz, "sim": s.rates.sim_hz},
        "duration_s": s.duration,
        "initial_q_rad": list(map(float, s.initial_q)),
        "input_stream": [
            {
                "t_s": smp.t,
                "pos_m": list(map(float, smp.pos)),
                "quat_wxyz": list(map(float, smp.quat)),
                "clutch": bool(smp.clutch),
            }
            for smp in s.input_stream
        ],
    }


def scenario_from_json(obj) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioInvalid("$", "scenario must be a JSON object")
    if obj.get("version") != SCENARIO_VERSION:
        raise ScenarioInvalid("version", f"expected {SCENARIO_VERSION}, got {obj.get('version')!r}")
    robot_field = obj.get("robot", "ur5e")
    robot = robot_from_json(robot_field)
    try:
        ocp_obj = obj.get("ocp", {})
        ocp = OCPConfig(
            horizon=int(ocp_obj.get("horizon_steps", 10)),
            dt=float(ocp_obj.get("dt_s", 0.1)),
            w_pos=ocp_obj.get("w_pos", (100.0,) * 3),
            w_ori=ocp_obj.get("w_ori", (100.0,) * 3),
            w_vel=ocp_obj.get("w_vel", (0.01,) * 6),
            w_acc=ocp_obj.get("w_acc", (0.01,) * 6),
            max_iterations=int(ocp_obj.get("max_iterations", 30)),
            tol_stationarity=float(ocp_obj.get("tol_stationarity", 1e-6)),
            tol_constraint=float(ocp_obj.get("tol_constraint", 1e-6)),
        )
    except ValueError as exc:
        raise ScenarioInvalid("ocp", str(exc)) from None
    rt_obj = obj.get("retarget", {})
    try:
        rt_cfg = retarget.RetargetConfig(
            mode=rt_obj.get("mode", "relative"),
            input_translation=_strategy_from_json(rt_obj.get("input_translation", {"kind": "calibrated_fixed"}), "retarget.input_translation"),
            input_rotation=_strategy_from_json(rt_obj.get("input_rotation", {"kind": "device_at_clutch"}), "retarget.input_rotation"),
            robot_translation=_strategy_from_json(rt_obj.get("robot_translation", {"kind": "calibrated_fixed"}), "retarget.robot_translation"),
            robot_rotation=_strategy_from_json(rt_obj.get("robot_rotation", {"kind": "upright_at_release"}), "retarget.robot_rotation"),
        )
    except ValueError as exc:
        raise ScenarioInvalid("retarget", str(exc)) from None
    flt = obj.get("input_filter", {})
    rates_obj = obj.get("rates_hz", {})
    try:
        stream = tuple(
            InputSample(
                t=float(smp["t_s"]),
                pos=smp["pos_m"],
                quat=smp["quat_wxyz"],
                clutch=bool(smp["clutch"]),
            )
            for smp in obj.get("input_stream", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid("input_stream", str(exc)) from None
    scenario = Scenario(
        name=obj.get("name", "unnamed"),
        robot=robot,
        ocp=ocp,
        retarget_cfg=rt_cfg,
        input_filter=FilterConfig(
            enabled=bool(flt.get("enabled", True)),
            pos_alpha=float(flt.get("pos_alpha", 0.2)),
            rot_alpha=float(flt.get("rot_alpha", 0.2)),
        ),
        rates=Rates(
            input_hz=float(rates_obj.get("input", 100.0)),
            plan_hz=float(rates_obj.get("plan", 10.0)),
            sim_hz=float(rates_obj.get("sim", 100.0)),
        ),
        duration=float(obj.get("duration_s", 1.0)),
        initial_q=obj.get("initial_q_rad", np.zeros(6)),
        input_stream=stream,
        robot_preset=robot_field if isinstance(robot_field, str) else None,
    )
    validate_scenario(scenario)
    return scenario


def load_scenario(path) -> Scenario:
    try:
        with open(path) as f:
            obj = json.load(f)
    except OSError as exc:
        raise ScenarioInvalid("$file", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid("$json", str(exc)) from None
    return scenario_from_json(obj)


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_json(s), f, indent=1)
        f.write("\n")
