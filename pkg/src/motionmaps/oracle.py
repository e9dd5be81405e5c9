"""Exact flow and depth from a known rigid scene and a known motion.

The scene moves, the camera stays put: a frame-1 point ``P`` lands at
``motion.apply(P)`` in frame 2. Flow is defined per source pixel (forward
mapping, no z-buffer), which is what the decomposition consumes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, CoordinateGrid, RasterMap, make_grid
from .se3 import POSE_FIELDS, Pose6DoF, TransformSE3, se3_from_6dof

DEFAULT_CAMERA = CameraModel.from_pixels(100.0, 128, 96)
SCENE_DEPTH = 5.0
SCENE_KINDS = ("plane", "slanted", "height_field")


class SceneBehindCameraError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SceneModel:
    """A rigid scene: either a frame-1 depth raster or explicit 3D points."""

    depth: np.ndarray | None = None
    points: np.ndarray | None = None

    def __post_init__(self):
        if (self.depth is None) == (self.points is None):
            raise ValueError("give exactly one of depth or points")
        if self.depth is not None:
            depth = np.asarray(self.depth, dtype=float)
            if not np.all(depth > 0):
                raise ValueError("scene depths must be strictly positive")
            object.__setattr__(self, "depth", depth)
        else:
            points = np.asarray(self.points, dtype=float)
            if points.ndim != 2 or points.shape[1] != 3:
                raise ValueError(f"points must be (N, 3), got {points.shape}")
            if not np.all(points[:, 2] > 0):
                raise ValueError("scene depths must be strictly positive")
            object.__setattr__(self, "points", points)

    def grid(self, camera: CameraModel) -> CoordinateGrid:
        if self.depth is not None:
            return make_grid(camera)
        gx, gy = project(self.points, camera)
        return CoordinateGrid(gx, gy)

    def points3d(self, camera: CameraModel) -> np.ndarray:
        if self.points is not None:
            return self.points
        grid = make_grid(camera)
        return back_project(grid.grid_x, grid.grid_y, self.depth, camera)

    def moved(self, motion: TransformSE3, camera: CameraModel) -> "SceneModel":
        """The same rigid scene after ``motion``, as a point set."""
        pts = motion.apply(self.points3d(camera)).reshape(-1, 3)
        return SceneModel(points=pts[pts[:, 2] > 0])


def project(points, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=float)
    z = points[..., 2]
    return camera.fx * points[..., 0] / z, camera.fy * points[..., 1] / z


def back_project(grid_x, grid_y, depth, camera: CameraModel) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    return np.stack([np.asarray(grid_x) / camera.fx * depth,
                     np.asarray(grid_y) / camera.fy * depth,
                     depth], axis=-1)


def render_flow(scene: SceneModel, scene_motion: TransformSE3, camera: CameraModel
                ) -> tuple[RasterMap, RasterMap, RasterMap]:
    """Return ``(flow_x, flow_y, depth1)`` in normalized units.

    A pixel is valid when its point stays in front of the camera and lands
    inside the image after the motion.
    """
    grid = scene.grid(camera)
    points = scene.points3d(camera)
    moved = scene_motion.apply(points)
    z1, z2 = points[..., 2], moved[..., 2]
    in_front = z2 > 0
    safe_z2 = np.where(in_front, z2, 1.0)
    # flow = f * (X2/Z2 - x) evaluated as f * (X2 - x*Z2) / Z2, which is
    # exactly zero for zero motion and avoids cancelling two projections
    bx = grid.grid_x / camera.fx
    by = grid.grid_y / camera.fy
    flow_x = camera.fx * (moved[..., 0] - bx * z2) / safe_z2
    flow_y = camera.fy * (moved[..., 1] - by * z2) / safe_z2
    inside = (np.abs(grid.grid_x + flow_x) <= 0.5) & (np.abs(grid.grid_y + flow_y) <= 0.5)
    valid = in_front & inside & (z1 > 0)
    if not valid.any():
        raise SceneBehindCameraError("no scene point is visible after the motion")
    flow_x = RasterMap(np.where(valid, flow_x, np.nan), valid)
    flow_y = RasterMap(np.where(valid, flow_y, np.nan), valid)
    depth1 = RasterMap(z1, z1 > 0)
    return flow_x, flow_y, depth1


def make_scene(kind: str, camera: CameraModel = DEFAULT_CAMERA, seed: int = 0,
               depth: float = SCENE_DEPTH) -> SceneModel:
    """Seeded frame-1 scene of the given kind around ``depth``."""
    rng = np.random.default_rng(seed)
    grid = make_grid(camera)
    x = grid.grid_x / camera.fx
    y = grid.grid_y / camera.fy
    if kind == "plane":
        z = np.full(camera.shape, depth)
    elif kind == "slanted":
        # plane Z = depth + a*X + b*Y, solved along each viewing ray
        a, b = rng.uniform(0.2, 0.5, size=2) * rng.choice([-1.0, 1.0], size=2)
        z = depth / (1.0 - a * x - b * y)
    elif kind == "height_field":
        z = np.full(camera.shape, depth)
        for _ in range(4):
            fx_, fy_ = rng.uniform(0.3, 1.5, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.1, 0.3)
            z += depth * amp * np.sin(2 * np.pi * (fx_ * grid.grid_x + fy_ * grid.grid_y) + phase)
        z = np.clip(z, 0.3 * depth, None)
    else:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")
    return SceneModel(depth=z)


@dataclass(frozen=True, eq=False)
class OracleCase:
    flow_x: RasterMap
    flow_y: RasterMap
    depth: RasterMap
    pose: Pose6DoF
    camera: CameraModel
    scene: SceneModel

    @property
    def motion(self) -> TransformSE3:
        return se3_from_6dof(self.pose)


def dof_name(dof) -> str:
    if isinstance(dof, (int, np.integer)):
        return POSE_FIELDS[dof]
    if dof not in POSE_FIELDS:
        raise ValueError(f"unknown DoF {dof!r}; expected one of {POSE_FIELDS} or 0..5")
    return dof


def make_case(pose, scene_kind: str = "plane", seed: int = 0,
              camera: CameraModel = DEFAULT_CAMERA) -> OracleCase:
    pose = Pose6DoF(*pose)
    scene = make_scene(scene_kind, camera, seed)
    flow_x, flow_y, depth = render_flow(scene, se3_from_6dof(pose), camera)
    return OracleCase(flow_x, flow_y, depth, pose, camera, scene)


def generate_case(dof, magnitude: float, scene_kind: str = "plane", seed: int = 0,
                  camera: CameraModel = DEFAULT_CAMERA) -> OracleCase:
    """Single-DoF case: only component ``dof`` of the scene motion is nonzero."""
    values = dict.fromkeys(POSE_FIELDS, 0.0)
    values[dof_name(dof)] = float(magnitude)
    return make_case(Pose6DoF(**values), scene_kind, seed, camera)


def corrupt_flow(flow: RasterMap, fraction: float, scale: float,
                 rng: np.random.Generator) -> tuple[RasterMap, np.ndarray]:
    """Replace ``fraction`` of the valid pixels with uniform noise of ``scale``.

    Returns the corrupted flow and the boolean mask of corrupted pixels.
    """
    idx = np.flatnonzero(flow.valid)
    chosen = rng.choice(idx, size=int(round(fraction * idx.size)), replace=False)
    values = flow.values.copy().reshape(-1)
    values[chosen] = rng.uniform(-scale, scale, size=chosen.size)
    mask = np.zeros(flow.values.size, dtype=bool)
    mask[chosen] = True
    return RasterMap(values.reshape(flow.shape), flow.valid), mask.reshape(flow.shape)


def add_noise(flow: RasterMap, sigma: float, rng: np.random.Generator) -> RasterMap:
    return RasterMap(flow.values + rng.normal(0.0, sigma, size=flow.shape), flow.valid)
