"""Odometry metrics: ATE, segment RMSE and devkit-style RPE.

Segment errors follow the KITTI devkit: for a start frame and a target
length ``L``, the segment ends at the first frame whose ground-truth path
length from the start reaches ``L``. The error transform is
``inv(inv(E0) @ E1) @ inv(G0) @ G1``; translation error is its translation
norm over ``L`` and rotation error its angle (degrees) over ``L``. The
angle comes from the chord between the two relative rotations rather than
arccos of the trace, which loses about half the digits near zero.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .trajectory import Trajectory

DEFAULT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


@dataclass(frozen=True)
class SegmentError:
    first: int
    last: int
    length: float
    t_err: float  # translation error / length (fraction, not percent)
    r_err: float  # rotation error in degrees / length


def _check_pair(gt: Trajectory, est: Trajectory):
    if len(gt) != len(est):
        raise ValueError(f"trajectory lengths differ: gt has {len(gt)}, est has {len(est)}")


def rigid_alignment(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation minimizing ``sum |R @ s + t - g|^2`` (no scale)."""
    mu_s, mu_t = source.mean(axis=0), target.mean(axis=0)
    cov = (target - mu_t).T @ (source - mu_s)
    u, _, vt = np.linalg.svd(cov)
    d = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2, 2] = -1.0
    rotation = u @ d @ vt
    return rotation, mu_t - rotation @ mu_s


def ate(gt: Trajectory, est: Trajectory) -> float:
    """RMS position error after rigid alignment of ``est`` onto ``gt``."""
    _check_pair(gt, est)
    g, e = gt.positions, est.positions
    rotation, translation = rigid_alignment(e, g)
    residual = e @ rotation.T + translation - g
    return float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))


def segment_errors(gt: Trajectory, est: Trajectory,
                   lengths: Sequence[float] = DEFAULT_LENGTHS) -> list[SegmentError]:
    """Errors over every (start frame, length) pair reachable in ``gt``."""
    _check_pair(gt, est)
    dist = gt.cumulative_length
    out = []
    for first in range(len(gt)):
        for length in lengths:
            last = int(np.searchsorted(dist, dist[first] + length, side="left"))
            if last >= len(gt):
                continue
            r_gt, t_gt = _delta(gt.poses[first], gt.poses[last])
            r_est, t_est = _delta(est.poses[first], est.poses[last])
            # inv(delta_est) @ delta_gt, using the rigid inverse
            t_err = r_est.T @ (t_gt - t_est)
            out.append(SegmentError(
                first, last, float(length),
                float(np.linalg.norm(t_err) / length),
                float(np.degrees(_angle_between(r_est, r_gt)) / length),
            ))
    return out


def _delta(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation of ``inv(a) @ b`` for rigid 4x4 poses."""
    ra = a[:3, :3]
    return ra.T @ b[:3, :3], ra.T @ (b[:3, 3] - a[:3, 3])


def _angle_between(ra: np.ndarray, rb: np.ndarray) -> float:
    """Angle of ``ra.T @ rb`` from the chord length ``|rb - ra|_F = sqrt(8) sin(angle/2)``.

    Same value as the arccos of the trace, but well conditioned at small
    angles and exactly zero for identical rotations.
    """
    chord = np.linalg.norm(rb - ra) / np.sqrt(8.0)
    return float(2.0 * np.arcsin(min(chord, 1.0)))


def _sequences(per_sequence) -> list[list[SegmentError]]:
    if isinstance(per_sequence, Mapping):
        per_sequence = list(per_sequence.values())
    nonempty = [list(s) for s in per_sequence if len(s)]
    if not nonempty:
        raise ValueError("no segment errors in any sequence")
    return nonempty


def kitti_rmse(per_sequence) -> tuple[float, float]:
    """Root-mean-square per sequence, then an unweighted mean over sequences.

    ``per_sequence`` is a list (or mapping) of per-sequence error lists;
    sequences without reachable segments are skipped.
    """
    t_vals, r_vals = [], []
    for seq in _sequences(per_sequence):
        t = np.array([e.t_err for e in seq])
        r = np.array([e.r_err for e in seq])
        t_vals.append(np.sqrt(np.mean(t ** 2)))
        r_vals.append(np.sqrt(np.mean(r ** 2)))
    return float(np.mean(t_vals)), float(np.mean(r_vals))


def rpe(per_sequence) -> tuple[float, float]:
    """Mean absolute error pooled over all segments of all sequences."""
    pooled = [e for seq in _sequences(per_sequence) for e in seq]
    t = np.abs([e.t_err for e in pooled])
    r = np.abs([e.r_err for e in pooled])
    return float(np.mean(t)), float(np.mean(r))


def aggregate_runs(values) -> tuple[float, float]:
    """Sample mean and sample standard deviation (NaN for a single run)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no runs to aggregate")
    std = float(np.std(values, ddof=1)) if values.size > 1 else float("nan")
    return float(np.mean(values)), std


# reporting scale: translation in percent, rotation in degrees per 100 units
METRIC_COLUMNS = {
    "ate": ("ATE",),
    "rmse": ("RMSE_t", "RMSE_r"),
    "rpe": ("RPE_t", "RPE_r"),
}


def evaluate(gts: Sequence[Trajectory], ests: Sequence[Trajectory],
             metrics: Sequence[str] = ("ate", "rmse", "rpe"),
             lengths: Sequence[float] = DEFAULT_LENGTHS) -> dict[str, float]:
    """All requested metrics for one run over several sequences.

    ATE is averaged over sequences. RMSE_t/RPE_t are in percent, RMSE_r and
    RPE_r in degrees per 100 length units.
    """
    if len(gts) != len(ests):
        raise ValueError(f"{len(gts)} ground-truth sequences but {len(ests)} estimates")
    out = {}
    if "ate" in metrics:
        out["ATE"] = float(np.mean([ate(g, e) for g, e in zip(gts, ests)]))
    if "rmse" in metrics or "rpe" in metrics:
        per_seq = [segment_errors(g, e, lengths) for g, e in zip(gts, ests)]
        if "rmse" in metrics:
            t, r = kitti_rmse(per_seq)
            out["RMSE_t"], out["RMSE_r"] = 100.0 * t, 100.0 * r
        if "rpe" in metrics:
            t, r = rpe(per_seq)
            out["RPE_t"], out["RPE_r"] = 100.0 * t, 100.0 * r
    return out


def _cell(mean: float, std: float, digits: int) -> str:
    if np.isnan(std):
        return f"{mean:.{digits}f}"
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


def format_table(runs: Sequence[Mapping[str, float]], label: str = "est",
                 fmt: str = "text", digits: int = 4) -> str:
    """One row of ``mean ± std`` cells over runs, as aligned text or CSV."""
    columns = [c for cols in METRIC_COLUMNS.values() for c in cols if c in runs[0]]
    cells = [_cell(*aggregate_runs([r[c] for r in runs]), digits) for c in columns]
    header = ["label", *columns]
    row = [label, *cells]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerow(row)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    widths = [max(len(h), len(c)) for h, c in zip(header, row)]
    lines = [" | ".join(x.ljust(w) for x, w in zip(line, widths)) for line in (header, row)]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
