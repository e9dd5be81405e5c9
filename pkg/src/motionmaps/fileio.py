"""Readers and writers for flow, raster, pose and intrinsics files.

Binary formats are little-endian throughout. Writes go to a temporary file
in the target directory and are renamed into place, so a failed write never
leaves a partial file behind.
"""
from __future__ import annotations

import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .geometry import CameraModel
from .se3 import orthonormalize
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

FLOW_MAGIC = 202021.25
FLOW_HEADER = struct.Struct("<fii")
RASTER_MAGIC = b"FMAP1\n"
RASTER_HEADER = struct.Struct("<III")
RASTER_CHANNELS = (1, 7)
MAX_PIXELS = 1 << 28
UNKNOWN_FLOW_THRESHOLD = 1e9


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class TrailingDataError(FormatError):
    pass


class DimensionError(FormatError):
    pass


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp files are private; give the result ordinary permissions
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_dims(dims, offset: int, channels: int = 1):
    if any(d <= 0 for d in dims):
        raise DimensionError(f"non-positive dimensions {tuple(dims)}", offset)
    if np.prod(dims, dtype=object) * channels > MAX_PIXELS:
        raise DimensionError(f"dimensions {tuple(dims)} x {channels} exceed {MAX_PIXELS} values", offset)


def _payload(data: bytes, offset: int, expected: int) -> bytes:
    got = len(data) - offset
    if got < expected:
        raise TruncatedError(f"payload has {got} bytes, expected {expected}", len(data))
    if got > expected:
        raise TrailingDataError(f"{got - expected} unexpected trailing bytes", offset + expected)
    return data[offset:]


# -- optical flow (.flo) ----------------------------------------------------

def encode_flow(u, v) -> bytes:
    """Encode pixel-unit flow; non-finite entries mark unknown flow."""
    u = np.asarray(u, dtype="<f4")
    v = np.asarray(v, dtype="<f4")
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError(f"u and v must be equal-shape 2-D arrays, got {u.shape} and {v.shape}")
    h, w = u.shape
    _check_dims((w, h), 4)
    return FLOW_HEADER.pack(FLOW_MAGIC, w, h) + np.stack([u, v], axis=-1).tobytes()


def decode_flow(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Decode to float32 ``(u, v)`` arrays of shape ``(height, width)``."""
    if len(data) < 4:
        raise TruncatedError("file shorter than the magic number", len(data))
    magic_bytes = data[:4]
    if magic_bytes != struct.pack("<f", FLOW_MAGIC):
        raise BadMagicError(f"bad flow magic {magic_bytes!r}", 0)
    if len(data) < FLOW_HEADER.size:
        raise TruncatedError("header ends early", len(data))
    _, w, h = FLOW_HEADER.unpack_from(data)
    _check_dims((w, h), 4)
    payload = _payload(data, FLOW_HEADER.size, w * h * 2 * 4)
    uv = np.frombuffer(payload, dtype="<f4").reshape(h, w, 2)
    return uv[..., 0].copy(), uv[..., 1].copy()


def flow_valid(u, v) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return (np.isfinite(u) & np.isfinite(v)
                & (np.abs(u) < UNKNOWN_FLOW_THRESHOLD) & (np.abs(v) < UNKNOWN_FLOW_THRESHOLD))


def write_flow(path, u, v) -> None:
    atomic_write(path, encode_flow(u, v))


def read_flow(path) -> tuple[np.ndarray, np.ndarray]:
    return decode_flow(Path(path).read_bytes())


# -- rasters (depth, motion maps) ---------------------------------------------

def encode_raster(array) -> bytes:
    """Encode ``(H, W)`` or ``(C, H, W)`` float data; NaN marks invalid.

    Channels are interleaved per pixel, rows stored top to bottom.
    """
    array = np.asarray(array, dtype="<f4")
    if array.ndim == 2:
        array = array[None]
    if array.ndim != 3 or array.shape[0] not in RASTER_CHANNELS:
        raise ValueError(f"raster must be (H, W) or (C, H, W) with C in {RASTER_CHANNELS}, "
                         f"got {array.shape}")
    c, h, w = array.shape
    _check_dims((w, h), len(RASTER_MAGIC), c)
    return RASTER_MAGIC + RASTER_HEADER.pack(w, h, c) + np.moveaxis(array, 0, -1).tobytes()


def decode_raster(data: bytes) -> np.ndarray:
    """Decode to float32 ``(C, H, W)``."""
    n = len(RASTER_MAGIC)
    if data[:n] != RASTER_MAGIC:
        if len(data) < n and RASTER_MAGIC.startswith(data):
            raise TruncatedError("file shorter than the magic string", len(data))
        raise BadMagicError(f"bad raster magic {data[:n]!r}", 0)
    if len(data) < n + RASTER_HEADER.size:
        raise TruncatedError("header ends early", len(data))
    w, h, c = RASTER_HEADER.unpack_from(data, n)
    if c not in RASTER_CHANNELS:
        raise DimensionError(f"unsupported channel count {c}", n + 8)
    _check_dims((w, h), n, c)
    payload = _payload(data, n + RASTER_HEADER.size, w * h * c * 4)
    hwc = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return np.ascontiguousarray(np.moveaxis(hwc, -1, 0))


def write_raster(path, array) -> None:
    atomic_write(path, encode_raster(array))


def read_raster(path) -> np.ndarray:
    return decode_raster(Path(path).read_bytes())


# -- poses --------------------------------------------------------------------

def format_number(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def encode_poses(poses) -> str:
    """One line of 12 numbers per pose: the row-major 3x4 matrix ``[R | t]``.

    Numbers use the shortest repr that round-trips, so reading back gives
    bit-identical doubles.
    """
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 3 or poses.shape[1:] not in ((3, 4), (4, 4)):
        raise ValueError(f"poses must be (N, 3, 4) or (N, 4, 4), got {poses.shape}")
    return "".join(" ".join(format_number(x) for x in p[:3].reshape(-1)) + "\n" for p in poses)


def decode_poses(text: str, orthonormal_tol: float = 1e-3) -> np.ndarray:
    """Parse to a raw ``(N, 3, 4)`` array, warning on non-orthonormal rotations."""
    rows = []
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
        fields = line.split()
        if fields:
            if len(fields) != 12:
                raise FormatError(f"line {lineno}: expected 12 numbers, got {len(fields)}", offset)
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", offset) from None
        offset += len(line.encode())
    poses = np.array(rows, dtype=float).reshape(-1, 3, 4)
    for i, p in enumerate(poses):
        r = p[:, :3]
        if np.abs(r.T @ r - np.eye(3)).max() > orthonormal_tol:
            logger.warning("pose %d: rotation is not orthonormal within %g", i, orthonormal_tol)
    return poses


def write_poses(path, poses) -> None:
    atomic_write(path, encode_poses(poses).encode())


def read_poses(path) -> np.ndarray:
    return decode_poses(Path(path).read_text())


def read_trajectory(path) -> Trajectory:
    """Poses as a :class:`Trajectory` with re-orthonormalized rotations."""
    poses = read_poses(path)
    fixed = poses.copy()
    for p in fixed:
        p[:, :3] = orthonormalize(p[:, :3])
    return Trajectory(fixed)


# -- intrinsics ---------------------------------------------------------------

def encode_camera(camera: CameraModel) -> str:
    return (f"fx={format_number(camera.fx)}\nfy={format_number(camera.fy)}\n"
            f"width={camera.width}\nheight={camera.height}\n")


def decode_camera(text: str) -> CameraModel:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    missing = {"fx", "fy", "width", "height"} - values.keys()
    if missing:
        raise ValueError(f"camera file is missing {sorted(missing)}")
    return CameraModel(float(values["fx"]), float(values["fy"]),
                       int(values["width"]), int(values["height"]))


def write_camera(path, camera: CameraModel) -> None:
    atomic_write(path, encode_camera(camera).encode())


def read_camera(path) -> CameraModel:
    return decode_camera(Path(path).read_text())
