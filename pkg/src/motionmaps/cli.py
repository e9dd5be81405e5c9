"""Command line interface: synth, decompose, estimate, eval."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .estimator import (AggregationConfig, InsufficientValidPixelsError, STRATEGIES, TZ_FUSIONS,
                        estimate_6dof, integrate_trajectory)
from .geometry import CameraModel, DimensionMismatchError, MotionMapStack, RasterMap, decompose
from .metrics import DEFAULT_LENGTHS, METRIC_COLUMNS, evaluate, format_table
from .oracle import SCENE_KINDS, add_noise, corrupt_flow, make_scene, render_flow
from .se3 import POSE_FIELDS, Pose6DoF, se3_from_6dof

logger = logging.getLogger("motionmaps")

EXIT_CODES = (
    (fileio.FormatError, 3),
    (DimensionMismatchError, 4),
    (InsufficientValidPixelsError, 5),
    (OSError, 6),
    (ValueError, 1),
)


def _camera(args, shape) -> CameraModel:
    """Camera from ``--camera`` or ``--fx/--fy``; size must match ``shape``."""
    h, w = shape
    if args.camera:
        camera = fileio.read_camera(args.camera)
    elif args.fx is not None and args.fy is not None:
        camera = CameraModel(args.fx, args.fy, w, h)
    else:
        raise ValueError("intrinsics required: pass --camera FILE or both --fx and --fy")
    if camera.shape != (h, w):
        raise DimensionMismatchError(
            f"camera is {camera.width}x{camera.height} but data is {w}x{h}")
    return camera


def _load_pair(flow_path, depth_path, args) -> tuple[RasterMap, RasterMap, RasterMap, CameraModel]:
    u, v = fileio.read_flow(flow_path)
    depth = fileio.read_raster(depth_path)
    if depth.shape[0] != 1:
        raise DimensionMismatchError(f"{depth_path}: depth must have 1 channel, got {depth.shape[0]}")
    depth = depth[0]
    if depth.shape != u.shape:
        raise DimensionMismatchError(
            f"flow {flow_path} is {u.shape[1]}x{u.shape[0]} but depth {depth_path} "
            f"is {depth.shape[1]}x{depth.shape[0]}")
    camera = _camera(args, u.shape)
    valid = fileio.flow_valid(u, v)
    fx, fy = camera.normalize_flow(u, v)
    return (RasterMap(np.where(valid, fx, np.nan), valid),
            RasterMap(np.where(valid, fy, np.nan), valid),
            RasterMap.from_nan(depth), camera)


def _add_camera_args(p):
    p.add_argument("--camera", help="intrinsics file with fx=, fy=, width=, height= lines")
    p.add_argument("--fx", type=float, help="normalized horizontal focal length")
    p.add_argument("--fy", type=float, help="normalized vertical focal length")


def cmd_synth(args) -> int:
    if args.frames < 2:
        raise ValueError(f"--frames must be at least 2, got {args.frames}")
    camera = CameraModel.from_pixels(args.focal_px, args.width, args.height)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    pose = Pose6DoF(**{args.dof: args.magnitude})
    motion = se3_from_6dof(pose)
    fileio.write_camera(out / "camera.txt", camera)
    for i in range(args.frames - 1):
        scene = make_scene(args.scene, camera, seed=args.seed + i)
        flow_x, flow_y, depth = render_flow(scene, motion, camera)
        if args.flow_noise > 0:
            flow_x = add_noise(flow_x, args.flow_noise / camera.width, rng)
            flow_y = add_noise(flow_y, args.flow_noise / camera.height, rng)
        if args.outlier_fraction > 0:
            flow_x, _ = corrupt_flow(flow_x, args.outlier_fraction, 0.5, rng)
            flow_y, _ = corrupt_flow(flow_y, args.outlier_fraction, 0.5, rng)
        u, v = camera.pixel_flow(flow_x.to_nan(), flow_y.to_nan())
        fileio.write_flow(out / f"flow_{i:04d}.flo", u, v)
        fileio.write_raster(out / f"depth_{i:04d}.fmap", depth.to_nan())
    trajectory = integrate_trajectory([pose] * (args.frames - 1), "scene")
    fileio.write_poses(out / "gt_poses.txt", trajectory.poses)
    print(f"wrote {args.frames - 1} frame pairs to {out}")
    return 0


def cmd_decompose(args) -> int:
    flow_x, flow_y, depth, camera = _load_pair(args.flow, args.depth, args)
    stack = decompose(flow_x, flow_y, depth, camera)
    if args.convention == "camera":
        stack = stack.negated()
    fileio.write_raster(args.out, stack.to_array())
    return 0


def _stacks(args):
    if args.maps:
        for path in args.maps:
            array = fileio.read_raster(path)
            if array.shape[0] != 7:
                raise DimensionMismatchError(f"{path}: expected 7 channels, got {array.shape[0]}")
            stack = MotionMapStack.from_array(array)
            yield stack.negated() if args.convention == "camera" else stack
        return
    if not args.flow or not args.depth:
        raise ValueError("pass --maps, or --flow and --depth")
    if len(args.flow) != len(args.depth):
        raise ValueError(f"{len(args.flow)} flow files but {len(args.depth)} depth files")
    for flow_path, depth_path in zip(args.flow, args.depth):
        flow_x, flow_y, depth, camera = _load_pair(flow_path, depth_path, args)
        yield decompose(flow_x, flow_y, depth, camera)


def cmd_estimate(args) -> int:
    config = AggregationConfig(args.strategy, args.trim_fraction, args.tz_fusion,
                               args.min_valid_fraction)
    relatives = [estimate_6dof(stack, config) for stack in _stacks(args)]
    trajectory = integrate_trajectory(relatives, "scene")
    fileio.write_poses(args.out_poses, trajectory.poses)
    if args.out_relative:
        text = "".join(" ".join(fileio.format_number(x) for x in p) + "\n" for p in relatives)
        fileio.atomic_write(args.out_relative, text.encode())
    for i, p in enumerate(relatives):
        logger.info("pair %d: %s", i, " ".join(f"{k}={v:.6g}" for k, v in p._asdict().items()))
    return 0


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_eval(args) -> int:
    gts = [fileio.read_trajectory(p) for p in args.gt]
    if len(args.est) != len(gts) * args.runs:
        raise ValueError(f"expected {len(gts) * args.runs} --est files "
                         f"({len(gts)} sequences x {args.runs} runs), got {len(args.est)}")
    ests = [fileio.read_trajectory(p) for p in args.est]
    metrics = [m for group in args.metric for m in group.split(",")] if args.metric else list(METRIC_COLUMNS)
    unknown = set(metrics) - set(METRIC_COLUMNS)
    if unknown:
        raise ValueError(f"unknown metric(s) {sorted(unknown)}; choose from {list(METRIC_COLUMNS)}")
    lengths = [x * args.length_scale for x in args.lengths]
    runs = [evaluate(gts, ests[r * len(gts):(r + 1) * len(gts)], metrics, lengths)
            for r in range(args.runs)]
    table = format_table(runs, label=args.label, fmt=args.format, digits=args.digits)
    if args.out:
        fileio.atomic_write(args.out, table.encode())
    else:
        sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionmaps", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write oracle flow, depth and ground-truth poses")
    p.add_argument("--dof", choices=POSE_FIELDS, required=True)
    p.add_argument("--magnitude", type=float, required=True,
                   help="scene motion per frame pair (depth units or radians)")
    p.add_argument("--scene", choices=SCENE_KINDS, default="plane")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=5, help="number of frames (pairs + 1)")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--focal-px", type=float, default=100.0)
    p.add_argument("--flow-noise", type=float, default=0.0, help="Gaussian flow noise, pixels")
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decompose", help="flow + depth -> 7-channel motion maps")
    p.add_argument("--flow", required=True)
    p.add_argument("--depth", required=True)
    _add_camera_args(p)
    p.add_argument("--convention", choices=("scene", "camera"), default="scene",
                   help="camera flips the sign of every map")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("estimate", help="per-pair 6DoF and the integrated trajectory")
    p.add_argument("--maps", nargs="+", help="7-channel map files, one per frame pair")
    p.add_argument("--flow", nargs="+")
    p.add_argument("--depth", nargs="+")
    _add_camera_args(p)
    p.add_argument("--strategy", choices=STRATEGIES, default="median")
    p.add_argument("--trim-fraction", type=float, default=0.1)
    p.add_argument("--tz-fusion", choices=TZ_FUSIONS, default="mask-weighted-average")
    p.add_argument("--min-valid-fraction", type=float, default=0.05)
    p.add_argument("--convention", choices=("scene", "camera"), default="scene",
                   help="sign convention of the --maps inputs")
    p.add_argument("--out-poses", required=True)
    p.add_argument("--out-relative", help="also write per-pair scene motions (6 numbers per line)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="print ATE / RMSE / RPE tables")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth pose files, one per sequence")
    p.add_argument("--est", nargs="+", required=True,
                   help="estimated pose files, run-major: all sequences of run 1, then run 2, ...")
    p.add_argument("--metric", action="append", help="ate, rmse, rpe (repeat or comma-separate)")
    p.add_argument("--lengths", type=_float_list, default=list(DEFAULT_LENGTHS),
                   help="comma-separated segment lengths")
    p.add_argument("--length-scale", type=float, default=1.0,
                   help="multiply every segment length, for scene-unit trajectories")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--digits", type=int, default=4)
    p.add_argument("--label", default="est")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"motionmaps {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
