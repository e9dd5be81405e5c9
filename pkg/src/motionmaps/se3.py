"""Rigid transforms and the (t, Euler) 6DoF parameterization.

Rotations use R = Rz(rz) @ Ry(ry) @ Rx(rx) with right-handed elementary
rotations. Camera axes are x right, y down, z forward.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

GIMBAL_MARGIN = 1e-6


class GimbalLockError(ValueError):
    """Raised when Euler angles cannot be recovered uniquely."""


class Pose6DoF(NamedTuple):
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0

    @classmethod
    def from_array(cls, values) -> "Pose6DoF":
        values = np.asarray(values, dtype=float).reshape(6)
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @property
    def translation(self) -> np.ndarray:
        return np.array(self[:3], dtype=float)

    @property
    def angles(self) -> np.ndarray:
        return np.array(self[3:], dtype=float)


POSE_FIELDS = Pose6DoF._fields


@dataclass(frozen=True)
class TransformSE3:
    """Rigid transform x -> rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=float)
        translation = np.array(self.translation, dtype=float).reshape(3)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "TransformSE3":
        return cls()

    @classmethod
    def from_matrix(cls, matrix) -> "TransformSE3":
        """Build from a 3x4 or 4x4 matrix [R | t]."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape not in ((3, 4), (4, 4)):
            raise ValueError(f"expected 3x4 or 4x4 matrix, got {matrix.shape}")
        return cls(matrix[:3, :3], matrix[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "TransformSE3":
        rt = self.rotation.T
        return TransformSE3(rt, -(rt @ self.translation))

    def __matmul__(self, other: "TransformSE3") -> "TransformSE3":
        if not isinstance(other, TransformSE3):
            return NotImplemented
        return TransformSE3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def allclose(self, other: "TransformSE3", atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(rx: float, ry: float, rz: float) -> np.ndarray:
    return rot_z(rz) @ rot_y(ry) @ rot_x(rx)


def rotation_to_euler(rotation) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_rotation` away from gimbal lock."""
    r = np.asarray(rotation, dtype=float)
    cos_ry = np.hypot(r[0, 0], r[1, 0])
    ry = np.arctan2(-r[2, 0], cos_ry)
    if abs(ry) >= np.pi / 2 - GIMBAL_MARGIN:
        raise GimbalLockError(f"pitch {ry:.9f} rad is at gimbal lock")
    rx = np.arctan2(r[2, 1], r[2, 2])
    rz = np.arctan2(r[1, 0], r[0, 0])
    return float(rx), float(ry), float(rz)


def se3_from_6dof(pose) -> TransformSE3:
    pose = Pose6DoF(*pose)
    return TransformSE3(euler_to_rotation(pose.rx, pose.ry, pose.rz), pose.translation)


def sixdof_from_se3(transform: TransformSE3) -> Pose6DoF:
    rx, ry, rz = rotation_to_euler(transform.rotation)
    tx, ty, tz = (float(v) for v in transform.translation)
    return Pose6DoF(tx, ty, tz, rx, ry, rz)


def compose(a: TransformSE3, b: TransformSE3) -> TransformSE3:
    """Return a∘b, i.e. apply ``b`` first."""
    return a @ b


def inverse(transform: TransformSE3) -> TransformSE3:
    return transform.inverse()


def rotation_angle(rotation) -> float:
    """Geodesic angle of a rotation matrix, clamped against rounding."""
    r = np.asarray(rotation, dtype=float)
    cos_angle = 0.5 * (np.trace(r) - 1.0)
    return float(np.arccos(np.clip(cos_angle, -1.0, 1.0)))


def orthonormalize(rotation) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r
