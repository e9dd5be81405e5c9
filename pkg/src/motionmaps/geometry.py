"""Closed-form motion maps from optical flow and depth.

All quantities live in normalized image units: a pixel column ``c`` of an
image ``W`` pixels wide sits at ``(c + 0.5 - W/2) / W`` and horizontal flow is
divided by ``W`` (likewise for rows and ``H``). With focal lengths normalized
the same way, ``grid / f`` is the tangent of the viewing angle, so every
formula below is exact for the single-DoF motion it targets.

Every per-map function works on arrays of any shape, so the same code serves
full rasters and scattered point sets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

EPS_DENOM = 1e-6
EPS_NORM = 1e-6

STACK_ORDER = ("t_x", "t_y", "t_z_from_x", "t_z_from_y", "r_x", "r_y", "r_z")

# Which pose component each map measures, and with what sign, under the
# scene-motion convention (x right, y down, z forward, R = Rz Ry Rx).
# The rotation maps are named after the flow component they read: the map
# built from horizontal flow responds to rotation about the vertical axis.
MAP_DOF = {
    "t_x": ("tx", 1.0),
    "t_y": ("ty", 1.0),
    "t_z_from_x": ("tz", 1.0),
    "t_z_from_y": ("tz", 1.0),
    "r_x": ("ry", 1.0),
    "r_y": ("rx", -1.0),
    "r_z": ("rz", -1.0),
}


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with focal lengths normalized by image size."""

    fx: float
    fy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    @classmethod
    def from_pixels(cls, focal_px: float, width: int, height: int,
                    focal_px_y: float | None = None) -> "CameraModel":
        """Normalize pixel focal lengths by the full image width/height."""
        fy_px = focal_px if focal_px_y is None else focal_px_y
        return cls(focal_px / width, fy_px / height, int(width), int(height))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def normalize_flow(self, u_px, v_px) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(u_px, dtype=float) / self.width, np.asarray(v_px, dtype=float) / self.height

    def pixel_flow(self, flow_x, flow_y) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(flow_x, dtype=float) * self.width, np.asarray(flow_y, dtype=float) * self.height


@dataclass(frozen=True, eq=False)
class RasterMap:
    """Real values with a boolean validity mask of the same shape."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape:
            raise DimensionMismatchError(
                f"values {values.shape} and valid {valid.shape} differ in shape")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def full(cls, values) -> "RasterMap":
        values = np.asarray(values, dtype=float)
        return cls(values, np.isfinite(values))

    # NaN marks invalid pixels in the on-disk and array representations
    from_nan = full

    def to_nan(self) -> np.ndarray:
        return np.where(self.valid, self.values, np.nan)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean()) if self.valid.size else 0.0

    def masked(self, mask) -> "RasterMap":
        """Restrict validity to ``mask``; values are left untouched."""
        return RasterMap(self.values, self.valid & np.asarray(mask, dtype=bool))


@dataclass(frozen=True, eq=False)
class CoordinateGrid:
    grid_x: np.ndarray
    grid_y: np.ndarray

    def __post_init__(self):
        gx = np.asarray(self.grid_x, dtype=float)
        gy = np.asarray(self.grid_y, dtype=float)
        if gx.shape != gy.shape:
            raise DimensionMismatchError(f"grid_x {gx.shape} and grid_y {gy.shape} differ")
        object.__setattr__(self, "grid_x", gx)
        object.__setattr__(self, "grid_y", gy)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.grid_x.shape


@dataclass(frozen=True, eq=False)
class MotionMapStack:
    """The seven motion maps in :data:`STACK_ORDER`."""

    maps: tuple

    def __post_init__(self):
        maps = tuple(self.maps)
        if len(maps) != len(STACK_ORDER):
            raise ValueError(f"expected {len(STACK_ORDER)} maps, got {len(maps)}")
        shapes = {m.shape for m in maps}
        if len(shapes) != 1:
            raise DimensionMismatchError(f"motion maps disagree in shape: {sorted(shapes)}")
        object.__setattr__(self, "maps", maps)

    def __getitem__(self, key) -> RasterMap:
        if isinstance(key, str):
            key = STACK_ORDER.index(key)
        return self.maps[key]

    def __iter__(self) -> Iterator[RasterMap]:
        return iter(self.maps)

    def __len__(self) -> int:
        return len(self.maps)

    def items(self):
        return zip(STACK_ORDER, self.maps)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.maps[0].shape

    def to_array(self) -> np.ndarray:
        """Stack as ``(7, ...)`` with NaN at invalid pixels."""
        return np.stack([m.to_nan() for m in self.maps])

    @classmethod
    def from_array(cls, array) -> "MotionMapStack":
        array = np.asarray(array, dtype=float)
        return cls(tuple(RasterMap.from_nan(a) for a in array))

    def negated(self) -> "MotionMapStack":
        return MotionMapStack(tuple(RasterMap(-m.values, m.valid) for m in self.maps))


def make_grid(camera: CameraModel) -> CoordinateGrid:
    """Pixel-center coordinates normalized by the full image width/height."""
    w, h = camera.width, camera.height
    if w < 2 or h < 2:
        raise ValueError(f"grid needs at least 2x2 pixels, got {w}x{h}")
    xs = (np.arange(w) + 0.5 - w / 2) / w
    ys = (np.arange(h) + 0.5 - h / 2) / h
    grid_x, grid_y = np.meshgrid(xs, ys)
    return CoordinateGrid(grid_x, grid_y)


def _check_shapes(*items):
    shapes = [item.shape for item in items]
    if len(set(shapes)) != 1:
        raise DimensionMismatchError(f"input dimensions disagree: {shapes}")


def _depth_valid(depth: RasterMap) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return depth.valid & np.isfinite(depth.values) & (depth.values > 0)


def _finish(values, valid) -> RasterMap:
    valid = valid & np.isfinite(values)
    return RasterMap(np.where(valid, values, np.nan), valid)


def map_tx(flow_x: RasterMap, depth: RasterMap, camera: CameraModel) -> RasterMap:
    _check_shapes(flow_x, depth)
    with np.errstate(all="ignore"):
        values = flow_x.values / camera.fx * depth.values
    return _finish(values, flow_x.valid & _depth_valid(depth))


def map_ty(flow_y: RasterMap, depth: RasterMap, camera: CameraModel) -> RasterMap:
    _check_shapes(flow_y, depth)
    with np.errstate(all="ignore"):
        values = flow_y.values / camera.fy * depth.values
    return _finish(values, flow_y.valid & _depth_valid(depth))


def _map_tz(flow: RasterMap, grid: np.ndarray, depth: RasterMap) -> RasterMap:
    denom = grid + flow.values
    with np.errstate(all="ignore"):
        values = -flow.values / denom * depth.values
        nonsingular = np.abs(denom) >= EPS_DENOM
    return _finish(values, flow.valid & _depth_valid(depth) & nonsingular)


def map_tz_from_x(flow_x: RasterMap, grid: CoordinateGrid, depth: RasterMap) -> RasterMap:
    _check_shapes(flow_x, grid, depth)
    return _map_tz(flow_x, grid.grid_x, depth)


def map_tz_from_y(flow_y: RasterMap, grid: CoordinateGrid, depth: RasterMap) -> RasterMap:
    _check_shapes(flow_y, grid, depth)
    return _map_tz(flow_y, grid.grid_y, depth)


def _map_r(flow: RasterMap, grid: np.ndarray, focal: float) -> RasterMap:
    with np.errstate(all="ignore"):
        values = np.arctan((grid + flow.values) / focal) - np.arctan(grid / focal)
    return _finish(values, flow.valid.copy())


def map_rx(flow_x: RasterMap, grid: CoordinateGrid, camera: CameraModel) -> RasterMap:
    """Change of horizontal viewing angle; responds to rotation about y."""
    _check_shapes(flow_x, grid)
    return _map_r(flow_x, grid.grid_x, camera.fx)


def map_ry(flow_y: RasterMap, grid: CoordinateGrid, camera: CameraModel) -> RasterMap:
    """Change of vertical viewing angle; responds to rotation about x."""
    _check_shapes(flow_y, grid)
    return _map_r(flow_y, grid.grid_y, camera.fy)


def map_rz(flow_x: RasterMap, flow_y: RasterMap, grid: CoordinateGrid,
           camera: CameraModel) -> RasterMap:
    """Signed in-plane angle between the viewing rays before and after motion.

    Pixels whose ray is within ``EPS_NORM`` of the optical axis in either
    frame carry no angular information and are invalid.
    """
    _check_shapes(flow_x, flow_y, grid)
    ux = grid.grid_x / camera.fx
    uy = grid.grid_y / camera.fy
    vx = (grid.grid_x + flow_x.values) / camera.fx
    vy = (grid.grid_y + flow_y.values) / camera.fy
    norm_u = np.hypot(ux, uy)
    norm_v = np.hypot(vx, vy)
    with np.errstate(all="ignore"):
        cosine = np.clip((ux * vx + uy * vy) / (norm_u * norm_v), -1.0, 1.0)
        cross = ux * vy - uy * vx
        values = -np.arccos(cosine) * np.sign(cross) + 0.0
        nonsingular = (norm_u >= EPS_NORM) & (norm_v >= EPS_NORM)
    return _finish(values, flow_x.valid & flow_y.valid & nonsingular)


def decompose(flow_x: RasterMap, flow_y: RasterMap, depth: RasterMap,
              camera: CameraModel, grid: CoordinateGrid | None = None) -> MotionMapStack:
    """Compute all seven motion maps.

    ``grid`` defaults to the camera's pixel grid; pass explicit coordinates
    for point sets or warped samples.
    """
    if grid is None:
        _check_shapes(flow_x, flow_y, depth)
        if flow_x.shape != camera.shape:
            raise DimensionMismatchError(
                f"flow is {flow_x.shape} but camera expects {camera.shape}")
        grid = make_grid(camera)
    _check_shapes(flow_x, flow_y, depth, grid)
    return MotionMapStack((
        map_tx(flow_x, depth, camera),
        map_ty(flow_y, depth, camera),
        map_tz_from_x(flow_x, grid, depth),
        map_tz_from_y(flow_y, grid, depth),
        map_rx(flow_x, grid, camera),
        map_ry(flow_y, grid, camera),
        map_rz(flow_x, flow_y, grid, camera),
    ))


def diagonal_maps(dof: str) -> Sequence[str]:
    """Names of the maps that measure pose component ``dof`` (e.g. ``"tz"``)."""
    return [name for name, (target, _) in MAP_DOF.items() if target == dof]
