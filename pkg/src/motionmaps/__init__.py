"""Motion maps: closed-form decomposition of flow and depth into per-DoF maps,
a deterministic 6DoF estimator, and odometry metrics."""

from .estimator import AggregationConfig, estimate_6dof, integrate_trajectory, relative_poses
from .estimators import MotionEstimator, MotionMapTransformer
from .geometry import (MAP_DOF, STACK_ORDER, CameraModel, CoordinateGrid, MotionMapStack,
                       RasterMap, decompose, make_grid, map_rx, map_ry, map_rz, map_tx, map_ty,
                       map_tz_from_x, map_tz_from_y)
from .metrics import SegmentError, aggregate_runs, ate, kitti_rmse, rpe, segment_errors
from .oracle import SceneModel, generate_case, render_flow
from .se3 import Pose6DoF, TransformSE3, compose, inverse, se3_from_6dof, sixdof_from_se3
from .trajectory import Trajectory

__version__ = "0.1.0"
