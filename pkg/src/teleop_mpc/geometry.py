"""Rigid-body math: rotation matrices, unit quaternions, homogeneous transforms.

Conventions used throughout the package:
  - rotations are 3x3 numpy arrays, orthonormal with det +1
  - positions are length-3 numpy arrays, meters
  - quaternions are length-4 numpy arrays in (w, x, y, z) order, unit norm,
    canonicalized to w >= 0
  - a Transform (R, p) maps target-frame coordinates into origin-frame
    coordinates via v_origin = R @ v_target + p
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROT_TOL = 1e-9
UPRIGHT_SINGULAR_TOL = 1e-6  # rad from vertical


class SingularOrientationError(ValueError):
    """Raised by upright() when the required leveling rotation is ambiguous."""


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError("vector has non-finite components")
    return a


def _as_rotation(r) -> np.ndarray:
    a = np.asarray(r, dtype=float).reshape(3, 3)
    return a


def is_rotation(r: np.ndarray, tol: float = ROT_TOL) -> bool:
    """True if r is orthonormal with determinant +1 within tol per entry."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if not np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0.0):
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


@dataclass(frozen=True)
class Transform:
    """Rigid displacement (rotation + translation)."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rot", _as_rotation(self.rot))
        object.__setattr__(self, "pos", _as_vec3(self.pos))

    def apply(self, point) -> np.ndarray:
        """Map a point from the target frame into the origin frame."""
        return self.rot @ _as_vec3(point) + self.pos

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix form."""
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.pos
        return m


def identity() -> Transform:
    return Transform()


def compose(a: Transform, b: Transform) -> Transform:
    """Sequential application: the transform of b expressed through a."""
    return Transform(a.rot @ b.rot, a.pos + a.rot @ b.pos)


def invert(t: Transform) -> Transform:
    """Inverse displacement: compose(t, invert(t)) is the identity."""
    rt = t.rot.T
    return Transform(rt, -(rt @ t.pos))


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quat_from_rotation(r) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, canonicalized to w >= 0.

    Largest-pivot (Shepperd) extraction for numerical stability near w = 0.
    """
    r = _as_rotation(r)
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > 0.0:
        w = math.sqrt(1.0 + t) / 2.0
        f = 1.0 / (4.0 * w)
        q = np.array([w, (r[2, 1] - r[1, 2]) * f, (r[0, 2] - r[2, 0]) * f, (r[1, 0] - r[0, 1]) * f])
    else:
        i = int(np.argmax([r[0, 0], r[1, 1], r[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k]) / 2.0
        f = 1.0 / (4.0 * s)
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) * f
        q[1 + i] = s
        q[1 + j] = (r[j, i] + r[i, j]) * f
        q[1 + k] = (r[k, i] + r[i, k]) * f
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_from_quat(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float).reshape(4)
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def quat_canonical(q) -> np.ndarray:
    """Normalize and flip sign so the scalar part is non-negative."""
    q = np.asarray(q, dtype=float).reshape(4)
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0.0 else q


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b, both (w, x, y, z)."""
    aw, ax, ay, az = np.asarray(a, dtype=float).reshape(4)
    bw, bx, by, bz = np.asarray(b, dtype=float).reshape(4)
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_slerp(a, b, t: float) -> np.ndarray:
    """Spherical interpolation from a to b along the shorter arc."""
    a = np.asarray(a, dtype=float).reshape(4)
    b = np.asarray(b, dtype=float).reshape(4)
    dot = float(a @ b)
    if dot < 0.0:
        b, dot = -b, -dot
    if dot > 1.0 - 1e-12:
        out = a + t * (b - a)
        return out / np.linalg.norm(out)
    ang = math.acos(min(1.0, dot))
    sa = math.sin(ang)
    out = (math.sin((1.0 - t) * ang) / sa) * a + (math.sin(t * ang) / sa) * b
    return out / np.linalg.norm(out)


def quat_error(desired, actual) -> np.ndarray:
    """Task-space orientation error e = eta_d*eps - eta*eps_d + eps_d x eps.

    Both quaternions are canonicalized to w >= 0 first so the error
    corresponds to the short rotation; ||e|| <= 1 always.
    """
    qd = quat_canonical(desired)
    qa = quat_canonical(actual)
    eta_d, eps_d = qd[0], qd[1:]
    eta, eps = qa[0], qa[1:]
    return eta_d * eps - eta * eps_d + np.cross(eps_d, eps)


def quat_error_jacobian_wrt_actual(desired, actual) -> np.ndarray:
    """3x3 map E with de = E @ omega for world angular velocity omega of `actual`.

    Derived from the quaternion kinematics qdot = 0.5 * (0, omega) * q; valid
    for the canonical (w >= 0) representative away from w = 0.
    """
    qd = quat_canonical(desired)
    qa = quat_canonical(actual)
    eta_d, eps_d = qd[0], qd[1:]
    eta, eps = qa[0], qa[1:]
    return 0.5 * (np.outer(eps_d, eps) + (eta_d * np.eye(3) + skew(eps_d)) @ (eta * np.eye(3) - skew(eps)))


def skew(v) -> np.ndarray:
    x, y, z = _as_vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _to_half_open_interval(angle: float) -> float:
    # representative of {angle, angle +- pi} in (-pi/2, pi/2]
    a = math.remainder(angle, math.pi)
    if a <= -math.pi / 2.0:
        a += math.pi
    elif a > math.pi / 2.0:
        a -= math.pi
    return a


def upright(r) -> np.ndarray:
    """Level a frame: roll about its x-axis until y is horizontal, then pitch
    about its y-axis until x is horizontal.

    Both steps use the smallest rotation that levels the axis, which makes the
    operation idempotent. Raises SingularOrientationError when the axis to be
    leveled is within UPRIGHT_SINGULAR_TOL rad of vertical and the rotation
    direction is ambiguous.
    """
    r = _as_rotation(r)
    y = r[:, 1]
    if math.hypot(y[0], y[1]) < UPRIGHT_SINGULAR_TOL:
        raise SingularOrientationError("y-axis is vertical; leveling roll is ambiguous")
    alpha = _to_half_open_interval(math.atan2(-y[2], r[2, 2]))
    r1 = r @ rot_x(alpha)
    x = r1[:, 0]
    if math.hypot(x[0], x[1]) < UPRIGHT_SINGULAR_TOL:
        raise SingularOrientationError("x-axis is vertical; leveling pitch is ambiguous")
    beta = _to_half_open_interval(math.atan2(x[2], r1[2, 2]))
    return r1 @ rot_y(beta)
