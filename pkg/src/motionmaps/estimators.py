"""scikit-learn style wrappers so the pipeline composes with sklearn tooling.

Samples are frame pairs. ``MotionMapTransformer`` takes ``X`` of shape
``(n_pairs, 3, H, W)`` holding flow_x, flow_y and depth, and returns
``(n_pairs, 7, H, W)`` motion maps with NaN at invalid pixels.
``MotionEstimator`` maps those to ``(n_pairs, 6)`` scene-motion poses.

Neither learns anything; ``fit`` validates inputs and records shapes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .estimator import AggregationConfig, estimate_6dof
from .geometry import STACK_ORDER, CameraModel, MotionMapStack, RasterMap, decompose

FLOW_UNITS = ("pixel", "normalized")


def check_image_batch(X, n_channels: int, name: str = "X") -> np.ndarray:
    """Validate a ``(n, C, H, W)`` float batch; NaN is allowed (invalid pixels).

    A single sample of shape ``(C, H, W)`` is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ValueError(f"{name} must have shape (n, {n_channels}, H, W), got {X.shape}")
    if X.shape[1] != n_channels:
        raise ValueError(f"{name} must have {n_channels} channels, got {X.shape[1]}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has no samples")
    if np.isinf(X).any():
        raise ValueError(f"{name} contains infinite values; mark invalid pixels with NaN")
    return X


def check_image_shape(X: np.ndarray, expected: tuple[int, int], name: str = "X"):
    if X.shape[2:] != tuple(expected):
        raise ValueError(f"{name} images are {X.shape[2:]}, fitted on {tuple(expected)}")


class MotionMapTransformer(TransformerMixin, BaseEstimator):
    """Flow + depth to the seven motion maps.

    Parameters
    ----------
    fx, fy : float
        Focal lengths normalized by image width and height.
    flow_units : {"pixel", "normalized"}
        Units of the flow channels in ``X``.
    """

    def __init__(self, fx: float = 0.5792, fy: float = 1.9119, flow_units: str = "pixel"):
        self.fx = fx
        self.fy = fy
        self.flow_units = flow_units

    def fit(self, X, y=None):
        if self.flow_units not in FLOW_UNITS:
            raise ValueError(f"flow_units must be one of {FLOW_UNITS}, got {self.flow_units!r}")
        X = check_image_batch(X, 3)
        h, w = X.shape[2:]
        self.camera_ = CameraModel(self.fx, self.fy, w, h)
        self.image_shape_ = (h, w)
        return self

    def transform(self, X):
        check_is_fitted(self, "camera_")
        X = check_image_batch(X, 3)
        check_image_shape(X, self.image_shape_)
        out = np.empty((X.shape[0], len(STACK_ORDER)) + X.shape[2:])
        for i, (u, v, depth) in enumerate(X):
            if self.flow_units == "pixel":
                u, v = self.camera_.normalize_flow(u, v)
            stack = decompose(RasterMap.from_nan(u), RasterMap.from_nan(v),
                              RasterMap.from_nan(depth), self.camera_)
            out[i] = stack.to_array()
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(STACK_ORDER, dtype=object)


class MotionEstimator(RegressorMixin, BaseEstimator):
    """Robust per-map aggregation of motion maps into a 6DoF scene motion.

    Parameters mirror :class:`~motionmaps.estimator.AggregationConfig`.
    """

    def __init__(self, strategy: str = "median", trim_fraction: float = 0.1,
                 tz_fusion: str = "mask-weighted-average", min_valid_fraction: float = 0.05):
        self.strategy = strategy
        self.trim_fraction = trim_fraction
        self.tz_fusion = tz_fusion
        self.min_valid_fraction = min_valid_fraction

    def fit(self, X, y=None):
        X = check_image_batch(X, len(STACK_ORDER))
        self.config_ = AggregationConfig(self.strategy, self.trim_fraction, self.tz_fusion,
                                         self.min_valid_fraction)
        self.image_shape_ = X.shape[2:]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "config_")
        X = check_image_batch(X, len(STACK_ORDER))
        return np.array([estimate_6dof(MotionMapStack.from_array(x), self.config_).as_array()
                         for x in X])
