"""Rigid transforms as unit quaternion + translation.

Conventions (fixed once, everything downstream relies on them):
  - quaternions are (w, x, y, z), right-handed
  - ``compose(a, b)`` applies b first, then a (matrix order ``A @ B``)
  - translations are meters, world frame unless stated otherwise
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-9


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    q = q / n
    # canonical sign: w >= 0 keeps round trips stable
    if q[0] < 0:
        q = -q
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to (w,x,y,z) quaternion, Shepperd's branch selection."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return quat_normalize(np.array([w, x, y, z]))


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate points (..., 3) by quaternion q."""
    return np.asarray(v, dtype=np.float64) @ quat_to_matrix(q).T


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle in [0, pi] represented by q.

    atan2 form stays accurate near identity where arccos(w) would lose
    ~half the significant digits.
    """
    return float(2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(float(q[0]))))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotate by ``rotation`` then translate by ``translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("pose has non-finite entries")
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            q = quat_normalize(q)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(quat_from_axis_angle(np.asarray(axis, dtype=np.float64), angle),
                    np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return Pose(matrix_to_quat(m[:3, :3]), m[:3, 3].copy())

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: ``(self * other)(p) = self(other(p))``."""
        q = quat_normalize(quat_multiply(self.rotation, other.rotation))
        t = quat_rotate(self.rotation, other.translation) + self.translation
        return Pose(q, t)

    def inverse(self) -> "Pose":
        qinv = quat_conjugate(self.rotation)
        return Pose(qinv, -quat_rotate(qinv, self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (N, 3)."""
        return quat_rotate(self.rotation, points) + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate directions (no translation)."""
        return quat_rotate(self.rotation, vectors)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def is_close(self, other: "Pose", tol_rot: float = _UNIT_TOL, tol_trans: float = _UNIT_TOL) -> bool:
        dq = quat_multiply(quat_conjugate(self.rotation), other.rotation)
        return (quat_angle(dq) <= tol_rot
                and float(np.linalg.norm(self.translation - other.translation)) <= tol_trans)

    def __repr__(self):
        q, t = self.rotation, self.translation
        return (f"Pose(q=({q[0]:+.4f},{q[1]:+.4f},{q[2]:+.4f},{q[3]:+.4f}), "
                f"t=({t[0]:+.4f},{t[1]:+.4f},{t[2]:+.4f}))")


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Functional alias: result applies b first, then a."""
    return a.compose(b)


def random_pose(rng: np.random.Generator, max_translation: float = 1.0) -> Pose:
    q = quat_normalize(rng.normal(size=4))
    t = rng.uniform(-max_translation, max_translation, size=3)
    return Pose(q, t)
