"""Sparse dynamic voxel grid accumulating registered scans.

Cells are keyed by integer index floor(p / voxel_size). A cell turns active
once its hit count reaches the activation threshold; insert_scan reports
exactly the cells that flipped inactive -> active during that call, which the
segmenter uses as growth seeds. The local map view exposes the active cells
within a radius of the robot, by default measured cylindrically in x-y as fits
a ground vehicle.

Single writer per grid; extract_local returns an immutable snapshot that stays
valid across later writes.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .geometry import SE3, PointCloud

Index = tuple[int, int, int]


@dataclass
class _Cell:
    points: list
    point_sum: np.ndarray
    hits: int = 0
    active: bool = False


@dataclass(frozen=True)
class LocalMapView:
    """Snapshot of the active cells around a query center."""

    center: np.ndarray
    radius: float
    indices: tuple[Index, ...]
    centers: np.ndarray              # (N, 3) cell centers, same order as indices
    points_by_cell: tuple[np.ndarray, ...]
    voxel_size: float

    def __len__(self) -> int:
        return len(self.indices)


class DynamicVoxelGrid:
    """Accumulates scan points into fixed-size sparse voxels.

    ``max_cells`` optionally caps memory: when set, the oldest inserted cells
    are evicted first (FIFO) once the cap is exceeded. ``evict_outside``
    drops every cell whose center is farther than the given radius from a
    reference position; segments already published downstream keep their
    snapshots, so eviction only affects future growth.
    """

    def __init__(self, voxel_size: float = 0.1, activation_threshold: int = 1,
                 cylindrical: bool = True, max_cells: int | None = None):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if activation_threshold < 1:
            raise ValueError("activation_threshold must be >= 1")
        self.voxel_size = float(voxel_size)
        self.activation_threshold = int(activation_threshold)
        self.cylindrical = bool(cylindrical)
        self.max_cells = max_cells
        self._cells: OrderedDict[Index, _Cell] = OrderedDict()

    def __len__(self) -> int:
        return len(self._cells)

    def index_of(self, point: np.ndarray) -> Index:
        return tuple(int(i) for i in np.floor(np.asarray(point) / self.voxel_size))

    def cell_center(self, index: Index) -> np.ndarray:
        return (np.asarray(index, dtype=np.float64) + 0.5) * self.voxel_size

    def active_indices(self) -> list[Index]:
        return [k for k, c in self._cells.items() if c.active]

    def points_in(self, index: Index) -> np.ndarray:
        cell = self._cells.get(index)
        if cell is None or not cell.points:
            return np.empty((0, 3))
        return np.array(cell.points)

    def mean_point_in(self, index: Index) -> np.ndarray | None:
        """Mean of every point ever binned into the cell.

        One representative point per cell makes downstream clouds invariant
        to how often an area was rescanned.
        """
        cell = self._cells.get(index)
        if cell is None or cell.hits == 0:
            return None
        return cell.point_sum / cell.hits

    def total_points(self) -> int:
        return sum(c.hits for c in self._cells.values())

    def insert_scan(self, cloud: PointCloud, pose: SE3) -> set[Index]:
        """Register a scan into the map frame; returns newly active cells."""
        newly_active: set[Index] = set()
        if cloud.is_empty:
            return newly_active
        world = pose.apply(cloud.points)
        indices = np.floor(world / self.voxel_size).astype(np.int64)
        for row, point in zip(indices, world):
            key = (int(row[0]), int(row[1]), int(row[2]))
            cell = self._cells.get(key)
            if cell is None:
                cell = _Cell(points=[], point_sum=np.zeros(3))
                self._cells[key] = cell
            cell.points.append(point)
            cell.point_sum = cell.point_sum + point
            cell.hits += 1
            if not cell.active and cell.hits >= self.activation_threshold:
                cell.active = True
                newly_active.add(key)
        if self.max_cells is not None:
            while len(self._cells) > self.max_cells:
                self._cells.popitem(last=False)
        return newly_active

    def _distances(self, centers: np.ndarray, center: np.ndarray) -> np.ndarray:
        delta = centers - center
        if self.cylindrical:
            return np.linalg.norm(delta[:, :2], axis=1)
        return np.linalg.norm(delta, axis=1)

    def extract_local(self, center, radius: float) -> LocalMapView:
        """Active cells whose centers lie within radius of center."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        center = np.asarray(center, dtype=np.float64).reshape(3)
        active = self.active_indices()
        if not active:
            return LocalMapView(center=center, radius=radius, indices=(),
                                centers=np.empty((0, 3)), points_by_cell=(),
                                voxel_size=self.voxel_size)
        centers = (np.array(active, dtype=np.float64) + 0.5) * self.voxel_size
        keep = self._distances(centers, center) <= radius
        indices = tuple(idx for idx, k in zip(active, keep) if k)
        pts = tuple(self.points_in(idx) for idx in indices)
        return LocalMapView(center=center, radius=radius, indices=indices,
                            centers=centers[keep], points_by_cell=pts,
                            voxel_size=self.voxel_size)

    def evict_outside(self, center, radius: float) -> list[Index]:
        """Drop cells beyond radius of center; returns the evicted indices."""
        center = np.asarray(center, dtype=np.float64).reshape(3)
        keys = list(self._cells.keys())
        centers = (np.array(keys, dtype=np.float64) + 0.5) * self.voxel_size
        far = self._distances(centers, center) > radius
        evicted = [k for k, f in zip(keys, far) if f]
        for k in evicted:
            del self._cells[k]
        return evicted
