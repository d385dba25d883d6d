"""Alignment and rasterization of segment clouds into network inputs.

Mirrors the documented preprocessing contract of the runtime: 2D PCA
alignment about the vertical axis with the half-plane ambiguity rule, then a
32x32x16 binary grid centered on the centroid with per-axis voxel sides of at
least 0.1 m stretched to fit the segment symmetrically.
"""

from __future__ import annotations

import math

import numpy as np

GRID_DIMS = (32, 32, 16)
MIN_VOXEL_SIDE_M = 0.1
_BOUNDARY_TOL = 1e-9


def align_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    centered = pts - pts.mean(axis=0)
    xy = centered[:, :2]
    cov = xy.T @ xy / len(xy)
    half_trace = 0.5 * (cov[0, 0] + cov[1, 1])
    diff = 0.5 * (cov[0, 0] - cov[1, 1])
    disc = math.sqrt(diff * diff + cov[0, 1] ** 2)
    if disc < 1e-15:
        angle = 0.0
    else:
        lam1 = half_trace + disc
        v = np.array([cov[0, 1], lam1 - cov[0, 0]])
        if np.linalg.norm(v) < 1e-12 * max(1.0, lam1):
            v = np.array([lam1 - cov[1, 1], cov[0, 1]])
        angle = math.atan2(v[1], v[0])
    c, s = math.cos(-angle), math.sin(-angle)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    aligned = centered @ R.T
    if np.sum(aligned[:, 1] < 0) < np.sum(aligned[:, 1] > 0):
        aligned[:, :2] = -aligned[:, :2]
    return aligned


def voxelize_aligned(aligned: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grid uint8, voxel_sides, original_extent)."""
    dims = np.array(GRID_DIMS, dtype=np.float64)
    extent = 2.0 * np.max(np.abs(aligned), axis=0)
    sides = np.maximum(MIN_VOXEL_SIDE_M, extent / dims)
    grid = np.zeros(GRID_DIMS, dtype=np.uint8)
    u = aligned / sides + dims / 2.0
    nearest = np.rint(u)
    on_boundary = np.abs(u - nearest) <= _BOUNDARY_TOL
    idx = np.floor(u).astype(np.int64)
    toward_center = nearest <= dims / 2.0
    idx = np.where(on_boundary,
                   np.where(toward_center, nearest, nearest - 1), idx).astype(np.int64)
    idx = np.clip(idx, 0, (dims - 1).astype(np.int64))
    grid[idx[:, 0], idx[:, 1], idx[:, 2]] = 1
    return grid, sides, extent


def cloud_to_input(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full preprocessing: align then rasterize; returns (grid, sides, extent)."""
    return voxelize_aligned(align_points(points))


def save_input_grid(path, grid, sides, extent) -> None:
    from . import segw
    segw.save_tensors(path, {
        "occupancy": np.asarray(grid, dtype=np.float32),
        "voxel_sides": np.asarray(sides, dtype=np.float32),
        "original_extent": np.asarray(extent, dtype=np.float32),
    })
