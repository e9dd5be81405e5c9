from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .se3 import TransformSE3


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Absolute camera-to-world poses, stored as an ``(N, 4, 4)`` array."""

    poses: np.ndarray
    frames: np.ndarray | None = None

    def __post_init__(self):
        poses = np.array(self.poses, dtype=float)
        if poses.ndim != 3 or poses.shape[1:] not in ((4, 4), (3, 4)):
            raise ValueError(f"poses must be (N, 4, 4) or (N, 3, 4), got {poses.shape}")
        if poses.shape[1] == 3:
            bottom = np.broadcast_to([0.0, 0.0, 0.0, 1.0], (len(poses), 1, 4))
            poses = np.concatenate([poses, bottom], axis=1)
        frames = np.arange(len(poses)) if self.frames is None else np.asarray(self.frames)
        if frames.shape != (len(poses),):
            raise ValueError("one frame index per pose is required")
        poses.flags.writeable = False
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_transforms(cls, transforms: Iterable[TransformSE3]) -> "Trajectory":
        return cls(np.stack([t.matrix for t in transforms]))

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i) -> TransformSE3:
        return TransformSE3.from_matrix(self.poses[i])

    @property
    def transforms(self) -> list[TransformSE3]:
        return [TransformSE3.from_matrix(p) for p in self.poses]

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :3, 3]

    @property
    def cumulative_length(self) -> np.ndarray:
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def relative_transforms(self) -> list[TransformSE3]:
        """Per-step motions ``inv(P[i-1]) @ P[i]`` in the camera frame."""
        ts = self.transforms
        return [a.inverse() @ b for a, b in zip(ts[:-1], ts[1:])]

    def transformed(self, transform: TransformSE3) -> "Trajectory":
        """Apply a global rigid transform on the world side."""
        return Trajectory(transform.matrix @ self.poses, self.frames)

