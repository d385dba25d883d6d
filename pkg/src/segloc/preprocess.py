"""Segment alignment and rasterization into the fixed descriptor input grid.

Alignment rotates each segment about the vertical axis so the principal
horizontal direction becomes +x, with a half-plane point-count rule resolving
the 180-degree ambiguity. Rasterization centers a 32x32x16 grid on the aligned
centroid and stretches each axis independently, never below a 0.1 m voxel
side, so large segments exactly fit while small ones keep metric resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSegment
from .geometry import SE3, PointCloud

GRID_DIMS = (32, 32, 16)
MIN_VOXEL_SIDE_M = 0.1
_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class AlignedSegment:
    """Segment cloud in its canonical frame.

    ``rotation_applied`` is the pure z-rotation that was applied after
    translating the centroid to the origin; ``centroid`` is the original
    centroid so the transform can be undone.
    """

    cloud: PointCloud
    rotation_applied: SE3
    centroid: np.ndarray


@dataclass(frozen=True)
class VoxelizedInput:
    """Binary occupancy grid of fixed dimension plus its metric scale."""

    grid: np.ndarray            # (32, 32, 16) uint8, entries 0/1
    voxel_sides: np.ndarray     # meters per axis, each >= MIN_VOXEL_SIDE_M
    original_extent: np.ndarray  # symmetric metric extent about the centroid

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.shape != GRID_DIMS:
            raise ValueError(f"grid must be {GRID_DIMS}, got {g.shape}")
        object.__setattr__(self, "grid", g.astype(np.uint8))
        object.__setattr__(self, "voxel_sides", np.asarray(self.voxel_sides, dtype=np.float64))
        object.__setattr__(self, "original_extent",
                           np.asarray(self.original_extent, dtype=np.float64))


def align(obs) -> AlignedSegment:
    """Canonicalize a segment observation's orientation via 2D PCA.

    Only a rotation about z plus a translation to the centroid are applied, so
    heights are preserved up to the vertical centroid shift. After alignment
    the x variance dominates the y variance and the y<0 half-plane holds at
    least as many points as the y>0 half.
    """
    cloud = getattr(obs, "cloud", obs)
    pts = cloud.points
    if pts.shape[0] < 2:
        raise DegenerateSegment("alignment needs at least 2 points")
    c = pts.mean(axis=0)
    centered = pts - c
    if np.max(np.abs(centered)) < 1e-12:
        raise DegenerateSegment("all points collocated")

    xy = centered[:, :2]
    cov = xy.T @ xy / xy.shape[0]
    # Principal direction of the 2x2 horizontal covariance.
    half_trace = 0.5 * (cov[0, 0] + cov[1, 1])
    diff = 0.5 * (cov[0, 0] - cov[1, 1])
    disc = math.sqrt(diff * diff + cov[0, 1] * cov[0, 1])
    if disc < 1e-15:
        angle = 0.0  # isotropic in the horizontal plane; keep orientation
    else:
        lam1 = half_trace + disc
        v = np.array([cov[0, 1], lam1 - cov[0, 0]])
        if np.linalg.norm(v) < 1e-12 * max(1.0, lam1):
            v = np.array([lam1 - cov[1, 1], cov[0, 1]])
        angle = math.atan2(v[1], v[0])

    rot = SE3.rot_z(-angle)
    aligned = centered @ rot.rotation.T
    below = int(np.sum(aligned[:, 1] < 0.0))
    above = int(np.sum(aligned[:, 1] > 0.0))
    if below < above:
        rot = SE3.rot_z(math.pi).compose(rot)
        aligned = centered @ rot.rotation.T
    return AlignedSegment(cloud=PointCloud(aligned), rotation_applied=rot, centroid=c)


def voxelize(aligned: AlignedSegment) -> VoxelizedInput:
    """Rasterize an aligned segment into the fixed binary grid.

    The grid is centered on the aligned centroid (the origin). original_extent
    is twice the largest absolute deviation per axis, which makes the
    voxel-side formula guarantee every point lands inside the grid. Points
    exactly on a voxel boundary bin toward the grid center.
    """
    pts = aligned.cloud.points
    if pts.shape[0] == 0:
        raise DegenerateSegment("cannot voxelize an empty segment")
    dims = np.array(GRID_DIMS, dtype=np.float64)
    extent = 2.0 * np.max(np.abs(pts), axis=0)
    sides = np.maximum(MIN_VOXEL_SIDE_M, extent / dims)

    grid = np.zeros(GRID_DIMS, dtype=np.uint8)
    u = pts / sides + dims / 2.0  # continuous grid coordinates in [0, dims]
    nearest = np.rint(u)
    on_boundary = np.abs(u - nearest) <= _BOUNDARY_TOL
    idx = np.floor(u).astype(np.int64)
    half = dims / 2.0
    # A boundary coordinate k belongs to cell k when that is the center side,
    # else to cell k-1.
    toward_center = nearest <= half
    idx = np.where(on_boundary, np.where(toward_center, nearest, nearest - 1), idx).astype(np.int64)
    idx = np.clip(idx, 0, (dims - 1).astype(np.int64))
    grid[idx[:, 0], idx[:, 1], idx[:, 2]] = 1
    return VoxelizedInput(grid=grid, voxel_sides=sides, original_extent=extent)


def save_voxelized_input(path, vox: VoxelizedInput) -> None:
    """Persist a network input grid in the shared tensor container."""
    from . import segw
    segw.save_tensors(path, {
        "occupancy": vox.grid.astype(np.float32),
        "voxel_sides": vox.voxel_sides.astype(np.float32),
        "original_extent": vox.original_extent.astype(np.float32),
    })


def load_voxelized_input(path) -> VoxelizedInput:
    from . import segw
    from .errors import WeightsFormatError
    tensors = segw.load_tensors(path)
    for name in ("occupancy", "voxel_sides", "original_extent"):
        if name not in tensors:
            raise WeightsFormatError("missing_tensor", name)
    return VoxelizedInput(grid=(tensors["occupancy"] >= 0.5).astype(np.uint8),
                          voxel_sides=tensors["voxel_sides"].astype(np.float64),
                          original_extent=tensors["original_extent"].astype(np.float64))
