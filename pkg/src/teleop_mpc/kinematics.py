"""Serial-arm forward kinematics from standard (distal) D-H parameters.

Provides the UR5e parameter table as the built-in preset "ur5e", analytic
task-space Jacobians for the trajectory planner, and a conservative reach
radius used to clip reference trajectories.

forward_kinematics returns the end-effector pose in the robot origin frame
{0_M}; model.base places {0_M} in the world and is composed by callers that
need world-frame quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import Transform


@dataclass(frozen=True)
class DHRow:
    """One standard D-H link: (a, d, alpha) plus a constant joint-angle offset."""

    a: float
    d: float
    alpha: float
    theta_offset: float = 0.0


@dataclass(frozen=True)
class RobotModel:
    dh: tuple[DHRow, ...]
    q_min: np.ndarray
    q_max: np.ndarray
    qd_min: np.ndarray
    qd_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    base: Transform = field(default_factory=geometry.identity)
    name: str = "custom"

    def __post_init__(self):
        if len(self.dh) != 6:
            raise ValueError("RobotModel requires exactly 6 D-H rows")
        for attr in ("q_min", "q_max", "qd_min", "qd_max", "u_min", "u_max"):
            v = np.asarray(getattr(self, attr), dtype=float).reshape(6)
            object.__setattr__(self, attr, v)
        for lo, hi in (("q_min", "q_max"), ("qd_min", "qd_max"), ("u_min", "u_max")):
            if not np.all(getattr(self, lo) < getattr(self, hi)):
                raise ValueError(f"{lo} must be elementwise below {hi}")

    @property
    def n_joints(self) -> int:
        return len(self.dh)


def ur5e() -> RobotModel:
    """UR5e model: published D-H table, datasheet-style joint/velocity limits.

    Acceleration bounds are not published; +-10 rad/s^2 keeps one planning
    period's velocity change within datasheet speeds.
    """
    dh = (
        DHRow(a=0.0, d=0.1625, alpha=math.pi / 2),
        DHRow(a=-0.425, d=0.0, alpha=0.0),
        DHRow(a=-0.3922, d=0.0, alpha=0.0),
        DHRow(a=0.0, d=0.1333, alpha=math.pi / 2),
        DHRow(a=0.0, d=0.0997, alpha=-math.pi / 2),
        DHRow(a=0.0, d=0.0996, alpha=0.0),
    )
    two_pi = 2.0 * math.pi
    qd = np.array([math.pi, math.pi, math.pi, two_pi, two_pi, two_pi])
    return RobotModel(
        dh=dh,
        q_min=-two_pi * np.ones(6),
        q_max=two_pi * np.ones(6),
        qd_min=-qd,
        qd_max=qd,
        u_min=-10.0 * np.ones(6),
        u_max=10.0 * np.ones(6),
        name="ur5e",
    )


PRESETS = {"ur5e": ur5e}


def preset(name: str) -> RobotModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown robot preset {name!r}; available: {sorted(PRESETS)}") from None


def dh_transform(row: DHRow, q: float) -> Transform:
    """Link transform for joint angle q (standard D-H: Rz(theta) Tz(d) Tx(a) Rx(alpha))."""
    th = q + row.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    rot = np.array(
        [
            [ct, -st * ca, st * sa],
            [st, ct * ca, -ct * sa],
            [0.0, sa, ca],
        ]
    )
    pos = np.array([row.a * ct, row.a * st, row.d])
    return Transform(rot, pos)


def link_frames(model: RobotModel, q) -> list[Transform]:
    """Cumulative frames [T_0, T_1, ..., T_6] in {0_M}; T_0 is the identity."""
    q = np.asarray(q, dtype=float).reshape(6)
    frames = [geometry.identity()]
    for row, qi in zip(model.dh, q):
        frames.append(geometry.compose(frames[-1], dh_transform(row, qi)))
    return frames


def forward_kinematics(model: RobotModel, q) -> Transform:
    """End-effector pose in {0_M}: ordered product of the six link transforms."""
    return link_frames(model, q)[-1]


def position_jacobian(model: RobotModel, q) -> np.ndarray:
    """3x6 Jacobian of end-effector position wrt joint angles, in {0_M}."""
    return _geometric_jacobian(model, q)[0]


def angular_jacobian(model: RobotModel, q) -> np.ndarray:
    """3x6 map from joint rates to end-effector angular velocity, in {0_M}."""
    return _geometric_jacobian(model, q)[1]


def _geometric_jacobian(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    frames = link_frames(model, q)
    p_e = frames[-1].pos
    jp = np.empty((3, 6))
    jw = np.empty((3, 6))
    for i in range(6):
        z = frames[i].rot[:, 2]
        jw[:, i] = z
        jp[:, i] = np.cross(z, p_e - frames[i].pos)
    return jp, jw


def orientation_error_jacobian(model: RobotModel, q, desired_quat) -> np.ndarray:
    """3x6 Jacobian of quat_error(desired, quat(FK(q))) wrt joint angles."""
    fk = forward_kinematics(model, q)
    e_map = geometry.quat_error_jacobian_wrt_actual(desired_quat, geometry.quat_from_rotation(fk.rot))
    return e_map @ angular_jacobian(model, q)


def max_reach(model: RobotModel) -> float:
    """Conservative reach radius: sum of |a| + |d| over links 2..6.

    The base offset d1 is excluded; the sphere is centered at the shoulder.
    """
    return float(sum(abs(r.a) + abs(r.d) for r in model.dh[1:]))


def reach_center(model: RobotModel) -> np.ndarray:
    """Shoulder position in {0_M}: base offset d1 along the base z-axis."""
    return np.array([0.0, 0.0, model.dh[0].d])


def fk_batch(model: RobotModel, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized FK + geometric Jacobians for a batch of configurations.

    qs is (N, 6); returns (positions (N,3), rotations (N,3,3),
    position jacobians (N,3,6), angular jacobians (N,3,6)), all in {0_M}.
    Matches forward_kinematics/_geometric_jacobian to machine precision;
    used by the planner where per-stage python loops would dominate solve time.
    """
    qs = np.asarray(qs, dtype=float)
    n = qs.shape[0]
    rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    pos = np.zeros((n, 3))
    origins = np.empty((n, 7, 3))
    zaxes = np.empty((n, 7, 3))
    origins[:, 0] = 0.0
    zaxes[:, 0] = np.array([0.0, 0.0, 1.0])
    for i, row in enumerate(model.dh):
        th = qs[:, i] + row.theta_offset
        ct, st = np.cos(th), np.sin(th)
        ca, sa = math.cos(row.alpha), math.sin(row.alpha)
        link_rot = np.empty((n, 3, 3))
        link_rot[:, 0, 0] = ct
        link_rot[:, 0, 1] = -st * ca
        link_rot[:, 0, 2] = st * sa
        link_rot[:, 1, 0] = st
        link_rot[:, 1, 1] = ct * ca
        link_rot[:, 1, 2] = -ct * sa
        link_rot[:, 2, 0] = 0.0
        link_rot[:, 2, 1] = sa
        link_rot[:, 2, 2] = ca
        link_pos = np.stack([row.a * ct, row.a * st, np.full(n, row.d)], axis=1)
        pos = pos + np.einsum("nij,nj->ni", rot, link_pos)
        rot = rot @ link_rot
        origins[:, i + 1] = pos
        zaxes[:, i + 1] = rot[:, :, 2]
    arm = pos[:, None, :] - origins[:, :6, :]
    jp = np.cross(zaxes[:, :6, :], arm).transpose(0, 2, 1)
    jw = zaxes[:, :6, :].transpose(0, 2, 1)
    return pos, rot, jp, jw
