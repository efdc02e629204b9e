"""Bundled closed-loop scenarios.

Each scenario scripts a device input stream against the "ur5e" preset from a
common home configuration:

  idle        clutch never engages; the arm must hold its pose.
  mirror      translations calibrated with a half-turn between the trees, so
              a +x device ramp must land the end effector at -x.
  roll        the operator pre-twists the device, clutches, and rolls 180
              degrees; rotation maps through the clutch-local frames while
              the translation mapping stays global.
  saturation  a 2 m/s device excursion; demanded joint velocities exceed the
              limits, which the planner must saturate without violating.

Builders are the source of truth; the JSON copies under scenarios_data/ are
what the CLI loads (kept in sync by a regression test and regenerable with
write_bundled_files()).
"""

from __future__ import annotations

import importlib.resources
import math

import numpy as np

from . import geometry, retarget
from .kinematics import ur5e
from .planner import OCPConfig
from .sim import FilterConfig, InputSample, Rates, Scenario, load_scenario, save_scenario

HOME_Q = (0.0, -math.pi / 2, math.pi / 2, -math.pi / 2, -math.pi / 2, 0.0)

_INPUT_HZ = 100.0
_RATES = Rates(input_hz=_INPUT_HZ, plan_hz=10.0, sim_hz=100.0)


def _stream(duration: float, pose_fn, clutch_fn) -> tuple[InputSample, ...]:
    n = int(round(duration * _INPUT_HZ))
    out = []
    for i in range(n):
        t = i / _INPUT_HZ
        pos, quat = pose_fn(t)
        out.append(InputSample(t=t, pos=pos, quat=quat, clutch=bool(clutch_fn(t))))
    return tuple(out)


def _ramp(t: float, t0: float, t1: float, v0: float, v1: float) -> float:
    if t <= t0:
        return v0
    if t >= t1:
        return v1
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0)


_IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def idle() -> Scenario:
    return Scenario(
        name="idle",
        robot=ur5e(),
        ocp=OCPConfig(),
        retarget_cfg=retarget.RetargetConfig(),
        input_filter=FilterConfig(),
        rates=_RATES,
        duration=2.0,
        initial_q=HOME_Q,
        input_stream=(),
    )


def mirror() -> Scenario:
    """Calibrated global translation with a half-turn between the trees."""
    cfg = retarget.RetargetConfig(
        input_translation=retarget.calibrated_fixed(np.eye(3)),
        input_rotation=retarget.device_at_clutch(),
        robot_translation=retarget.calibrated_fixed(geometry.rot_z(math.pi)),
        robot_rotation=retarget.ee_at_release(),
    )

    def pose(t):
        x = _ramp(t, 0.5, 2.0, 0.0, 0.10)
        return np.array([x, 0.0, 0.0]), _IDENTITY_QUAT

    return Scenario(
        name="mirror",
        robot=ur5e(),
        ocp=OCPConfig(),
        retarget_cfg=cfg,
        input_filter=FilterConfig(),
        rates=_RATES,
        duration=4.0,
        initial_q=HOME_Q,
        input_stream=_stream(4.0, pose, lambda t: t >= 0.5),
    )


def roll() -> Scenario:
    """180 degree device roll after clutching with a pre-twisted controller."""
    cfg = retarget.RetargetConfig(
        input_translation=retarget.calibrated_fixed(np.eye(3)),
        input_rotation=retarget.device_at_clutch(),
        robot_translation=retarget.calibrated_fixed(np.eye(3)),
        robot_rotation=retarget.upright_at_release(),
    )
    pre_twist = -math.pi / 2

    def pose(t):
        phi = _ramp(t, 2.0, 4.0, 0.0, math.pi)
        quat = geometry.quat_from_rotation(geometry.rot_x(pre_twist + phi))
        return np.zeros(3), quat

    return Scenario(
        name="roll",
        robot=ur5e(),
        ocp=OCPConfig(),
        retarget_cfg=cfg,
        input_filter=FilterConfig(),
        rates=_RATES,
        duration=6.0,
        initial_q=HOME_Q,
        input_stream=_stream(6.0, pose, lambda t: 2.0 <= t < 5.5),
    )


def saturation() -> Scenario:
    """Fast tangential sweep around the base; the demanded yaw rate is well
    above the base joints' velocity limit, so plans have to ride the q-dot
    bounds for an extended stretch while the reference stays inside reach."""
    cfg = retarget.RetargetConfig(
        input_translation=retarget.calibrated_fixed(np.eye(3)),
        input_rotation=retarget.device_at_clutch(),
        robot_translation=retarget.calibrated_fixed(np.eye(3)),
        robot_rotation=retarget.ee_at_release(),
    )
    # arc around the base axis through the home end-effector point
    radius = math.hypot(0.4919, 0.1333)
    theta0 = math.atan2(-0.1333, -0.4919)
    anchor = np.array([radius * math.cos(theta0), radius * math.sin(theta0), 0.0])

    def pose(t):
        swing = _ramp(t, 0.2, 0.8, 0.0, 2.6)
        theta = theta0 + (swing if t <= 0.8 else _ramp(t, 1.4, 2.7, 2.6, 0.0))
        arc = np.array([radius * math.cos(theta), radius * math.sin(theta), 0.0])
        return arc - anchor, _IDENTITY_QUAT

    return Scenario(
        name="saturation",
        robot=ur5e(),
        ocp=OCPConfig(),
        retarget_cfg=cfg,
        input_filter=FilterConfig(),
        rates=_RATES,
        duration=3.2,
        initial_q=HOME_Q,
        input_stream=_stream(3.2, pose, lambda t: t >= 0.2),
    )


BUILDERS = {"idle": idle, "mirror": mirror, "roll": roll, "saturation": saturation}


def names() -> list[str]:
    return sorted(BUILDERS)


def build(name: str) -> Scenario:
    try:
        return BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown bundled scenario {name!r}; available: {names()}") from None


def bundled_path(name: str):
    """Filesystem path of a packaged scenario JSON."""
    return importlib.resources.files("teleop_mpc").joinpath("scenarios_data", f"{name}.json")


def load_bundled(name: str) -> Scenario:
    if name not in BUILDERS:
        raise KeyError(f"unknown bundled scenario {name!r}; available: {names()}")
    return load_scenario(bundled_path(name))


def write_bundled_files(directory=None) -> list[str]:
    """Regenerate the packaged scenario JSONs from the builders."""
    import pathlib

    directory = pathlib.Path(directory) if directory else pathlib.Path(str(bundled_path("x"))).parent
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in BUILDERS.items():
        path = directory / f"{name}.json"
        save_scenario(builder(), path)
        written.append(str(path))
    return written
