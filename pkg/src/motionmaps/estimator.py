"""Deterministic 6DoF estimate from motion maps, and trajectory integration.

Each pose component is a robust statistic of the map(s) that measure it.
This is exact for single-DoF scene motions. For combined motions the maps
are coupled (a translation along x also shows up in the map for rotation
about y, scaled by inverse depth, and vice versa) and the estimate is
biased; no correction is attempted here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .geometry import MAP_DOF, MotionMapStack
from .se3 import POSE_FIELDS, Pose6DoF, TransformSE3, se3_from_6dof, sixdof_from_se3
from .trajectory import Trajectory

STRATEGIES = ("mean", "median", "trimmed-mean")
TZ_FUSIONS = ("x-only", "y-only", "mask-weighted-average")
CONVENTIONS = ("scene", "camera")


class InsufficientValidPixelsError(ValueError):
    def __init__(self, map_name: str, fraction: float, required: float):
        super().__init__(
            f"motion map {map_name!r} has {fraction:.1%} valid pixels, "
            f"at least {required:.1%} required")
        self.map_name = map_name
        self.fraction = fraction
        self.required = required


@dataclass(frozen=True)
class AggregationConfig:
    strategy: str = "median"
    trim_fraction: float = 0.1
    tz_fusion: str = "mask-weighted-average"
    min_valid_fraction: float = 0.05

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.tz_fusion not in TZ_FUSIONS:
            raise ValueError(f"tz_fusion must be one of {TZ_FUSIONS}, got {self.tz_fusion!r}")
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ValueError(f"trim_fraction must be in [0, 0.5), got {self.trim_fraction}")
        if not 0.0 < self.min_valid_fraction <= 1.0:
            raise ValueError(
                f"min_valid_fraction must be in (0, 1], got {self.min_valid_fraction}")

    def statistic(self, values: np.ndarray) -> float:
        if self.strategy == "mean":
            return float(np.mean(values))
        if self.strategy == "median":
            return float(np.median(values))
        return float(stats.trim_mean(values, self.trim_fraction))


def _maps_for(dof: str, config: AggregationConfig) -> list[str]:
    names = [name for name, (target, _) in MAP_DOF.items() if target == dof]
    if dof == "tz" and config.tz_fusion == "x-only":
        names = ["t_z_from_x"]
    elif dof == "tz" and config.tz_fusion == "y-only":
        names = ["t_z_from_y"]
    return names


def estimate_6dof(stack: MotionMapStack, config: AggregationConfig | None = None) -> Pose6DoF:
    """Scene-motion pose from the diagonal motion maps.

    With ``tz_fusion="mask-weighted-average"`` both t_z maps are pooled, so
    each contributes in proportion to its number of valid pixels.
    """
    config = config or AggregationConfig()
    out = {}
    for dof in POSE_FIELDS:
        pooled = []
        for name in _maps_for(dof, config):
            raster = stack[name]
            if raster.valid_fraction < config.min_valid_fraction:
                raise InsufficientValidPixelsError(
                    name, raster.valid_fraction, config.min_valid_fraction)
            pooled.append(MAP_DOF[name][1] * raster.valid_values)
        out[dof] = config.statistic(np.concatenate(pooled))
    return Pose6DoF(**out)


def _step(relative, convention: str) -> TransformSE3:
    transform = relative if isinstance(relative, TransformSE3) else se3_from_6dof(relative)
    if convention == "scene":
        return transform.inverse()
    if convention == "camera":
        return transform
    raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def integrate_trajectory(relative: Iterable, convention: str = "scene") -> Trajectory:
    """Chain per-frame motions into absolute camera-to-world poses.

    Scene motions are inverted into camera motions first. Pose 0 is the
    identity, so ``N`` relatives give ``N + 1`` poses.
    """
    poses = [TransformSE3.identity()]
    for rel in relative:
        poses.append(poses[-1] @ _step(rel, convention))
    if len(poses) == 1:
        raise ValueError("need at least one relative motion")
    return Trajectory.from_transforms(poses)


def relative_poses(trajectory: Trajectory, convention: str = "scene") -> list[Pose6DoF]:
    """Inverse of :func:`integrate_trajectory`."""
    steps = trajectory.relative_transforms()
    if convention == "scene":
        steps = [s.inverse() for s in steps]
    elif convention != "camera":
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return [sixdof_from_se3(s) for s in steps]


def estimate_sequence(stacks: Sequence[MotionMapStack], config: AggregationConfig | None = None
                      ) -> tuple[list[Pose6DoF], Trajectory]:
    """Per-pair scene-motion estimates and the camera trajectory they imply."""
    relatives = [estimate_6dof(s, config) for s in stacks]
    return relatives, integrate_trajectory(relatives, "scene")
