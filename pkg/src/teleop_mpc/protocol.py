"""Websocket message schemas, client <-> session host.

All numbers are SI units and radians; quaternions are (w, x, y, z). Every
message is a single JSON object with a "type" discriminator.
"""

from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field

PROTOCOL_VERSION = 1

Vec3 = Annotated[list[float], Field(min_length=3, max_length=3)]
Quat = Annotated[list[float], Field(min_length=4, max_length=4)]


class InputPoseMsg(BaseModel):
    type: Literal["input_pose"]
    pos: Vec3
    quat: Quat


class ClutchMsg(BaseModel):
    type: Literal["clutch"]
    engaged: bool


class CalibrateMsg(BaseModel):
    type: Literal["calibrate"]
    r_tI: Quat
    r_tM: Quat


class SetModeMsg(BaseModel):
    type: Literal["set_mode"]
    mode: Literal["relative", "absolute"]
    input_translation: Optional[str] = None
    input_rotation: Optional[str] = None
    robot_translation: Optional[str] = None
    robot_rotation: Optional[str] = None


class ResetMsg(BaseModel):
    type: Literal["reset"]


class PauseMsg(BaseModel):
    type: Literal["pause"]
    on: bool


ClientMessage = Annotated[
    Union[InputPoseMsg, ClutchMsg, CalibrateMsg, SetModeMsg, ResetMsg, PauseMsg],
    Field(discriminator="type"),
]


class ClientEnvelope(BaseModel):
    """Validation shim: parses any client message by its type field."""

    msg: ClientMessage


class PoseModel(BaseModel):
    pos: Vec3
    quat: Quat


class HelloMsg(BaseModel):
    type: Literal["hello"] = "hello"
    version: int = PROTOCOL_VERSION
    robot: str
    H: int
    control: bool  # whether this client holds control authority


class SolveInfo(BaseModel):
    ms: float
    iterations: int
    converged: bool
    cost: float


class StateMsg(BaseModel):
    type: Literal["state"] = "state"
    t: float
    q: list[float]
    qd: list[float]
    ee: PoseModel
    desired: PoseModel
    clutch: bool
    paused: bool
    mode: str
    strategies: dict[str, str]
    solve: SolveInfo
    planned_path: list[Vec3]
    frames: dict[str, PoseModel]  # t_I, r_I, t_M, r_M
    links: Optional[list[PoseModel]] = None  # per-link poses, flag-gated


class ErrorMsg(BaseModel):
    type: Literal["error"] = "error"
    code: str
    detail: str
