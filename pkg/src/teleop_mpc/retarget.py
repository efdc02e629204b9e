"""Clutch-driven motion retargeting over two trees of coordinate frames.

Translational and rotational device displacements are tracked against
separate reference frames ({t_I}, {r_I} on the input tree; {t_M}, {r_M} on
the robot tree), so translation and rotation mappings can use different
orientation-selection strategies (e.g. globally calibrated translation with
local, clutch-relative rotation).

The machine is event-sourced: clutch edges and pose samples are the only
inputs, and every transition is a pure function old state -> new state.
Per-sample processing order: clutch edge first, then the sample's
displacement update, then the desired pose is read off the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .geometry import Transform

STRATEGY_KINDS = (
    "calibrated_fixed",
    "device_at_clutch",
    "ee_at_release",
    "upright_at_release",
    "world_identity",
)
_INPUT_ONLY = {"device_at_clutch"}
_ROBOT_ONLY = {"ee_at_release", "upright_at_release"}


class RetargetError(Exception):
    """Base for retargeting protocol errors."""

    code = "retarget_error"


class AlreadyEngagedError(RetargetError):
    code = "already_engaged"


class NotEngagedError(RetargetError):
    code = "not_engaged"


class StrategyMismatchError(RetargetError):
    code = "strategy_mismatch"


@dataclass(frozen=True)
class Strategy:
    """Orientation selection for one reference frame."""

    kind: str
    rotation: np.ndarray | None = None  # payload for calibrated_fixed

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "calibrated_fixed":
            rot = np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=float)
            if not geometry.is_rotation(rot, tol=1e-6):
                raise ValueError("calibrated_fixed requires a valid rotation matrix")
            object.__setattr__(self, "rotation", rot)
        elif self.rotation is not None:
            raise ValueError(f"strategy {self.kind!r} carries no rotation payload")


def calibrated_fixed(rotation=None) -> Strategy:
    return Strategy("calibrated_fixed", np.eye(3) if rotation is None else rotation)


def device_at_clutch() -> Strategy:
    return Strategy("device_at_clutch")


def ee_at_release() -> Strategy:
    return Strategy("ee_at_release")


def upright_at_release() -> Strategy:
    return Strategy("upright_at_release")


def world_identity() -> Strategy:
    return Strategy("world_identity")


@dataclass(frozen=True)
class RetargetConfig:
    mode: str = "relative"  # "relative" | "absolute"
    input_translation: Strategy = field(default_factory=calibrated_fixed)
    input_rotation: Strategy = field(default_factory=device_at_clutch)
    robot_translation: Strategy = field(default_factory=calibrated_fixed)
    robot_rotation: Strategy = field(default_factory=upright_at_release)

    def __post_init__(self):
        if self.mode not in ("relative", "absolute"):
            raise ValueError(f"unknown retargeting mode {self.mode!r}")
        for name in ("input_translation", "input_rotation"):
            if getattr(self, name).kind in _ROBOT_ONLY:
                raise ValueError(f"{name} cannot use robot-tree strategy {getattr(self, name).kind!r}")
        for name in ("robot_translation", "robot_rotation"):
            if getattr(self, name).kind in _INPUT_ONLY:
                raise ValueError(f"{name} cannot use input-tree strategy {getattr(self, name).kind!r}")


@dataclass(frozen=True)
class RetargetState:
    """Clutch flag, the four reference frames, and the current displacements.

    calib_rot_input / calib_rot_robot hold the rotations of the two
    calibrated translation frames; calibrate() overwrites them.
    """

    engaged: bool
    input_trans_frame: Transform  # T_{0_I t_I}
    input_rot_frame: Transform  # T_{0_I r_I}
    robot_trans_frame: Transform  # T_{0_M t_M}
    robot_rot_frame: Transform  # T_{0_M r_M}
    trans_disp: Transform  # T_{t_I d}
    rot_disp: Transform  # T_{r_I d}
    calib_rot_input: np.ndarray
    calib_rot_robot: np.ndarray


def _choose_rotation(strategy: Strategy, calibrated: np.ndarray, observed_rot: np.ndarray,
                     previous: np.ndarray) -> np.ndarray:
    """Resolve a frame orientation per its strategy at a clutch event."""
    if strategy.kind == "calibrated_fixed":
        return calibrated
    if strategy.kind == "world_identity":
        return np.eye(3)
    if strategy.kind in ("device_at_clutch", "ee_at_release"):
        return observed_rot
    # upright_at_release: fall back to the previous orientation near the
    # leveling singularity (frame keeps its last usable orientation)
    try:
        return geometry.upright(observed_rot)
    except geometry.SingularOrientationError:
        return previous


def initial_state(cfg: RetargetConfig, device_pose: Transform, ee_pose: Transform) -> RetargetState:
    """Build the four reference frames once from the starting poses.

    This is the calibration phase of absolute retargeting; relative
    retargeting re-chooses frames at every clutch edge anyway.
    """
    calib_in = cfg.input_translation.rotation if cfg.input_translation.kind == "calibrated_fixed" else np.eye(3)
    calib_rb = cfg.robot_translation.rotation if cfg.robot_translation.kind == "calibrated_fixed" else np.eye(3)
    def rot_for(strategy, calibrated, observed):
        return _choose_rotation(strategy, calibrated, observed, previous=observed)

    return RetargetState(
        engaged=False,
        input_trans_frame=Transform(rot_for(cfg.input_translation, calib_in, device_pose.rot), device_pose.pos),
        input_rot_frame=Transform(rot_for(cfg.input_rotation, _strategy_payload(cfg.input_rotation), device_pose.rot), device_pose.pos),
        robot_trans_frame=Transform(rot_for(cfg.robot_translation, calib_rb, ee_pose.rot), ee_pose.pos),
        robot_rot_frame=Transform(rot_for(cfg.robot_rotation, _strategy_payload(cfg.robot_rotation), ee_pose.rot), ee_pose.pos),
        trans_disp=geometry.identity(),
        rot_disp=geometry.identity(),
        calib_rot_input=calib_in,
        calib_rot_robot=calib_rb,
    )


def _strategy_payload(strategy: Strategy) -> np.ndarray:
    return strategy.rotation if strategy.kind == "calibrated_fixed" else np.eye(3)


def calibrate(state: RetargetState, cfg: RetargetConfig, r_input, r_robot) -> RetargetState:
    """Store new orientations for the two calibrated translation frames.

    Frame positions are unchanged; the rotations persist across clutch
    events until calibrated again. Last write wins.
    """
    if cfg.input_translation.kind != "calibrated_fixed" or cfg.robot_translation.kind != "calibrated_fixed":
        raise StrategyMismatchError("calibrate requires calibrated_fixed translation strategies")
    r_input = np.asarray(r_input, dtype=float)
    r_robot = np.asarray(r_robot, dtype=float)
    for r in (r_input, r_robot):
        if not geometry.is_rotation(r, tol=1e-6):
            raise StrategyMismatchError("calibration rotations must be valid rotation matrices")
    return replace(
        state,
        calib_rot_input=r_input,
        calib_rot_robot=r_robot,
        input_trans_frame=Transform(r_input, state.input_trans_frame.pos),
        robot_trans_frame=Transform(r_robot, state.robot_trans_frame.pos),
    )


def on_clutch_activate(state: RetargetState, cfg: RetargetConfig, device_pose: Transform) -> RetargetState:
    """Clutch engage: reset the input-tree frames to the device position.

    In absolute mode the frames stay fixed and only the clutch flag flips.
    """
    if state.engaged:
        raise AlreadyEngagedError("clutch already engaged")
    if cfg.mode == "absolute":
        return replace(state, engaged=True)
    return replace(
        state,
        engaged=True,
        input_trans_frame=Transform(
            _choose_rotation(cfg.input_translation, state.calib_rot_input, device_pose.rot,
                             state.input_trans_frame.rot),
            device_pose.pos,
        ),
        input_rot_frame=Transform(
            _choose_rotation(cfg.input_rotation, _strategy_payload(cfg.input_rotation), device_pose.rot,
                             state.input_rot_frame.rot),
            device_pose.pos,
        ),
    )


def on_clutch_deactivate(state: RetargetState, cfg: RetargetConfig, ee_pose: Transform) -> RetargetState:
    """Clutch release: reset the robot-tree frames to the end-effector
    position and zero the displacements.

    In absolute mode only the clutch flag flips; the displacements hold
    their last value so the desired pose freezes without jumping back to
    the calibrated frames.
    """
    if not state.engaged:
        raise NotEngagedError("clutch not engaged")
    if cfg.mode == "absolute":
        return replace(state, engaged=False)
    return replace(
        state,
        engaged=False,
        robot_trans_frame=Transform(
            _choose_rotation(cfg.robot_translation, state.calib_rot_robot, ee_pose.rot,
                             state.robot_trans_frame.rot),
            ee_pose.pos,
        ),
        robot_rot_frame=Transform(
            _choose_rotation(cfg.robot_rotation, _strategy_payload(cfg.robot_rotation), ee_pose.rot,
                             state.robot_rot_frame.rot),
            ee_pose.pos,
        ),
        trans_disp=geometry.identity(),
        rot_disp=geometry.identity(),
    )


def update_displacements(state: RetargetState, device_pose: Transform) -> RetargetState:
    """Express the current device pose relative to both input-tree frames."""
    if not state.engaged:
        raise NotEngagedError("displacements only update while engaged")
    return replace(
        state,
        trans_disp=geometry.compose(geometry.invert(state.input_trans_frame), device_pose),
        rot_disp=geometry.compose(geometry.invert(state.input_rot_frame), device_pose),
    )


def desired_pose(state: RetargetState) -> Transform:
    """Desired end-effector pose: displacements applied in the robot-tree frames.

    Rotation: R_{0_M r_M} * R_{r_I d}; position: p_{0_M t_M} + R_{0_M t_M} * p_{t_I d}.
    With the clutch off (relative mode) the displacements are identity and the
    pose is constant between clutch events.
    """
    return Transform(
        state.robot_rot_frame.rot @ state.rot_disp.rot,
        state.robot_trans_frame.pos + state.robot_trans_frame.rot @ state.trans_disp.pos,
    )


@dataclass
class InputFilter:
    """Measurement smoothing applied before the state machine.

    Exponential smoothing on position and spherical interpolation on
    orientation; coefficients are per-sample and tuned for a 100 Hz stream.
    """

    pos_alpha: float = 0.2
    rot_alpha: float = 0.2
    _pos: np.ndarray | None = None
    _quat: np.ndarray | None = None

    def reset(self):
        self._pos = None
        self._quat = None

    def apply(self, pose: Transform) -> Transform:
        quat = geometry.quat_from_rotation(pose.rot)
        if self._pos is None:
            self._pos = pose.pos.copy()
            self._quat = quat
        else:
            self._pos = self._pos + self.pos_alpha * (pose.pos - self._pos)
            self._quat = geometry.quat_slerp(self._quat, quat, self.rot_alpha)
        return Transform(geometry.rotation_from_quat(self._quat), self._pos)


class Retargeter:
    """Stateful convenience wrapper: feeds timestamped pose samples with an
    in-band clutch flag through the transition functions.

    Clutch edges are detected against the previous sample's flag and
    processed before the sample's displacement update. On release the
    robot-tree frames are rebuilt from the current *desired* pose (not a
    measured one), so planner tracking lag cannot drift the mapping.
    """

    def __init__(self, cfg: RetargetConfig, device_pose: Transform, ee_pose: Transform,
                 input_filter: InputFilter | None = None):
        self.cfg = cfg
        self.input_filter = input_filter
        self.state = initial_state(cfg, self._filtered(device_pose), ee_pose)

    def _filtered(self, pose: Transform) -> Transform:
        return self.input_filter.apply(pose) if self.input_filter is not None else pose

    @property
    def engaged(self) -> bool:
        return self.state.engaged

    def desired(self) -> Transform:
        return desired_pose(self.state)

    def calibrate(self, r_input, r_robot):
        self.state = calibrate(self.state, self.cfg, r_input, r_robot)

    def set_config(self, cfg: RetargetConfig):
        """Swap the strategy configuration; frames persist until the next event."""
        self.cfg = cfg
        self.state = replace(
            self.state,
            calib_rot_input=cfg.input_translation.rotation
            if cfg.input_translation.kind == "calibrated_fixed" else self.state.calib_rot_input,
            calib_rot_robot=cfg.robot_translation.rotation
            if cfg.robot_translation.kind == "calibrated_fixed" else self.state.calib_rot_robot,
        )

    def process(self, pose: Transform, clutch: bool) -> Transform:
        """Ingest one device sample; returns the resulting desired pose."""
        pose = self._filtered(pose)
        if clutch and not self.state.engaged:
            self.state = on_clutch_activate(self.state, self.cfg, pose)
        elif not clutch and self.state.engaged:
            self.state = on_clutch_deactivate(self.state, self.cfg, self.desired())
        if self.state.engaged:
            self.state = update_displacements(self.state, pose)
        return self.desired()
