"""Reference trajectory for the planner from the desired-pose stream.

Constant velocity along a straight line over the horizon, constant
orientation, positions clipped to the manipulator's reach sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Transform

# caps reference excursions caused by filter spikes in the velocity estimate
MAX_SPEED = 2.0  # m/s


@dataclass(frozen=True)
class ReferenceTrajectory:
    positions: np.ndarray  # (H+1, 3), meters
    orientations: np.ndarray  # (H+1, 4), unit quaternions (w, x, y, z)
    dt: float  # seconds between samples

    @property
    def horizon(self) -> int:
        return self.positions.shape[0] - 1


def clip(p, center, reach: float) -> np.ndarray:
    """Radial projection onto the reach sphere; points inside pass through."""
    p = np.asarray(p, dtype=float).reshape(3)
    center = np.asarray(center, dtype=float).reshape(3)
    d = p - center
    dist = float(np.linalg.norm(d))
    if dist <= reach:
        return p
    return center + (reach / dist) * d


def predict(
    prev: Transform,
    curr: Transform,
    sample_dt: float,
    horizon: int,
    plan_dt: float,
    reach_center,
    reach: float,
) -> ReferenceTrajectory:
    """Extrapolate the desired pose at constant velocity over the horizon.

    Velocity is estimated from the last two desired-pose samples; orientation
    is held constant at the current desired orientation.
    """
    if sample_dt <= 0.0:
        raise ValueError("sample_dt must be positive")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    v = (curr.pos - prev.pos) / sample_dt
    speed = float(np.linalg.norm(v))
    if speed > MAX_SPEED:
        v = v * (MAX_SPEED / speed)
    ks = np.arange(horizon + 1)[:, None]
    raw = curr.pos[None, :] + ks * plan_dt * v[None, :]
    positions = np.array([clip(p, reach_center, reach) for p in raw])
    quat = geometry.quat_from_rotation(curr.rot)
    orientations = np.tile(quat, (horizon + 1, 1))
    return ReferenceTrajectory(positions=positions, orientations=orientations, dt=plan_dt)
