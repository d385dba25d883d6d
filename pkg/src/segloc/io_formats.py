"""Scan and pose file ingestion.

Scans come either as xyz text (one "x y z" line per point, meters) or as the
packed binary used by automotive LiDAR logs: little-endian float32 quadruples
(x, y, z, intensity) with the intensity discarded. Poses are text lines of 12
floats, the row-major [R|t] block of a 3x4 matrix.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import PoseFormatError, ScanFormatError
from .geometry import SE3, PointCloud

SCAN_FORMATS = ("xyz-text", "velodyne-bin")


def read_scan(path, fmt: str = "xyz-text") -> PointCloud:
    if fmt == "xyz-text":
        return _read_xyz_text(path)
    if fmt == "velodyne-bin":
        return _read_velodyne_bin(path)
    raise ValueError(f"unknown scan format {fmt!r}")


def _read_xyz_text(path) -> PointCloud:
    pts = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            tokens = stripped.split()
            if len(tokens) != 3:
                raise ScanFormatError(
                    f"expected 3 coordinates, got {len(tokens)}", line=lineno)
            try:
                pts.append([float(t) for t in tokens])
            except ValueError as e:
                raise ScanFormatError(f"bad float: {e}", line=lineno) from e
    return PointCloud(np.array(pts) if pts else np.empty((0, 3)))


def _read_velodyne_bin(path) -> PointCloud:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % 16 != 0:
        raise ScanFormatError(
            f"file size {len(raw)} is not a multiple of 16-byte records",
            offset=len(raw) - len(raw) % 16)
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return PointCloud(data[:, :3].astype(np.float64))


def write_scan(path, cloud: PointCloud, fmt: str = "xyz-text") -> None:
    if fmt == "xyz-text":
        with open(path, "w", encoding="ascii") as f:
            for p in cloud.points:
                f.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
    elif fmt == "velodyne-bin":
        quad = np.zeros((len(cloud), 4), dtype="<f4")
        quad[:, :3] = cloud.points
        with open(path, "wb") as f:
            f.write(quad.tobytes())
    else:
        raise ValueError(f"unknown scan format {fmt!r}")


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def read_poses(path) -> list[SE3]:
    """KITTI-style pose file: 12 floats per line, row-major [R|t].

    Rotations drifting from orthonormality by more than 1e-6 are
    re-orthonormalized and flagged with a warning.
    """
    poses = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            tokens = stripped.split()
            if len(tokens) != 12:
                raise PoseFormatError(
                    f"expected 12 values, got {len(tokens)}", line=lineno)
            try:
                vals = np.array([float(t) for t in tokens]).reshape(3, 4)
            except ValueError as e:
                raise PoseFormatError(f"bad float: {e}", line=lineno) from e
            R, t = vals[:, :3], vals[:, 3]
            if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-6:
                warnings.warn(f"re-orthonormalized rotation at line {lineno}")
                R = _orthonormalize(R)
            poses.append(SE3(R, t))
    return poses


def write_poses(path, poses: list[SE3]) -> None:
    with open(path, "w", encoding="ascii") as f:
        for T in poses:
            block = np.hstack([T.rotation, T.translation.reshape(3, 1)])
            f.write(" ".join(f"{v:.12g}" for v in block.reshape(-1)) + "\n")
