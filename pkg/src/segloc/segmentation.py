"""Incremental segment growth over newly active voxels.

Two growth rules are provided: Euclidean clustering after RANSAC ground
removal (outdoor scenes, ground acts as the separator) and normal-smoothness
region growing seeded at low-curvature cells (plane-like structure, indoor
scenes). Both operate on voxel-cell centers for incremental efficiency; raw
points are attached to segments through their cells.

Growth is equivalent to connected components over cell adjacency: when a new
cell arrives it joins every neighboring segment, and segments connected by it
merge with the smaller id surviving, so the final partition is independent of
insertion order. Per-segment observation snapshots are appended whenever a
segment changes; a segment is complete once it goes untouched for a configured
number of local-map updates.

Segmentation state is owned by one worker per robot stream; updates are
emitted as immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud, eig_sym3
from .voxel_map import DynamicVoxelGrid, LocalMapView

Index = tuple[int, int, int]


@dataclass(frozen=True)
class SegmenterParams:
    euclidean_distance_threshold: float = 0.2
    min_segment_points: int = 100
    max_segment_points: int = 15000
    normal_neighborhood_k: int = 20
    smoothness_angle_threshold_deg: float = 10.0
    curvature_seed_threshold: float = 0.05
    ground_inlier_threshold: float = 0.2
    max_ground_tilt_deg: float = 30.0
    ransac_iterations: int = 100

    def __post_init__(self):
        positive = ("euclidean_distance_threshold", "min_segment_points",
                    "max_segment_points", "normal_neighborhood_k",
                    "smoothness_angle_threshold_deg", "curvature_seed_threshold",
                    "ground_inlier_threshold", "ransac_iterations")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.min_segment_points >= self.max_segment_points:
            raise ValueError("min_segment_points must be < max_segment_points")


@dataclass(frozen=True)
class SegmentObservation:
    """Snapshot of a segment's cloud at one growth step."""

    cloud: PointCloud
    timestamp: int
    centroid: np.ndarray


@dataclass
class Segment:
    id: int
    cells: set = field(default_factory=set)
    observations: list = field(default_factory=list)
    complete: bool = False
    last_touched: int = 0
    has_seed: bool = True  # smoothness growing marks segments without a seed cell

    def point_count(self) -> int:
        return len(self.observations[-1].cloud) if self.observations else 0

    def latest(self) -> SegmentObservation:
        return self.observations[-1]


@dataclass(frozen=True)
class SegmentationUpdate:
    created: tuple[int, ...]
    grown: tuple[int, ...]
    merges: tuple[tuple[int, int], ...]  # (surviving id, absorbed id)


def remove_ground(view: LocalMapView, params: SegmenterParams,
                  rng: np.random.Generator | None = None) -> tuple[set, set]:
    """Partition view cells into (ground, non-ground) via a RANSAC plane fit.

    The plane must be within max_ground_tilt_deg of horizontal. With fewer
    than 3 cells no fit is attempted and everything is non-ground.
    """
    indices = list(view.indices)
    if len(indices) < 3:
        return set(), set(indices)
    rng = rng or np.random.default_rng(0)
    centers = view.centers
    min_nz = math.cos(math.radians(params.max_ground_tilt_deg))

    best_inliers = None
    best_count = 2  # require at least 3 inliers to accept a plane
    for _ in range(params.ransac_iterations):
        pick = rng.choice(len(indices), size=3, replace=False)
        p0, p1, p2 = centers[pick]
        n = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            continue
        n = n / norm
        if abs(n[2]) < min_nz:
            continue
        dist = np.abs((centers - p0) @ n)
        inliers = dist <= params.ground_inlier_threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None:
        return set(), set(indices)
    ground = {idx for idx, g in zip(indices, best_inliers) if g}
    return ground, set(indices) - ground


def _neighbor_offsets(distance_threshold: float, voxel_size: float) -> list[Index]:
    """Integer offsets whose center-to-center distance is within threshold."""
    r = int(math.floor(distance_threshold / voxel_size + 1e-9))
    out = []
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dz in range(-r, r + 1):
                if dx == dy == dz == 0:
                    continue
                if math.sqrt(dx * dx + dy * dy + dz * dz) * voxel_size \
                        <= distance_threshold + 1e-9:
                    out.append((dx, dy, dz))
    return out


class IncrementalSegmenter:
    """Grows segments from newly active voxels, one instance per robot stream."""

    def __init__(self, grid: DynamicVoxelGrid, params: SegmenterParams | None = None,
                 method: str = "euclidean", ground_removal: bool | None = None,
                 seed: int = 0):
        if method not in ("euclidean", "smoothness"):
            raise ValueError(f"unknown segmentation method {method!r}")
        self.grid = grid
        self.params = params or SegmenterParams()
        self.method = method
        self.ground_removal = (method == "euclidean") if ground_removal is None else ground_removal
        self.seed = seed
        self.update_counter = 0
        self.segments: dict[int, Segment] = {}
        self.cell_to_segment: dict[Index, int] = {}
        self._next_id = 1
        self._offsets = _neighbor_offsets(self.params.euclidean_distance_threshold,
                                          grid.voxel_size)
        self._normals: dict[Index, tuple[np.ndarray, float, bool]] = {}

    # -- geometry helpers ---------------------------------------------------

    def _normal_and_curvature(self, idx: Index, view: LocalMapView):
        """Cached per-cell surface normal and curvature from k nearest cells."""
        hit = self._normals.get(idx)
        if hit is not None:
            return hit
        center = self.grid.cell_center(idx)
        d = np.linalg.norm(view.centers - center, axis=1)
        k = min(self.params.normal_neighborhood_k, len(d))
        nearest = view.centers[np.argsort(d)[:k]]
        if len(nearest) < 3:
            result = (np.array([0.0, 0.0, 1.0]), 0.0, True)  # flagged arbitrary
        else:
            centered = nearest - nearest.mean(axis=0)
            cov = centered.T @ centered / len(nearest)
            lam, vecs = eig_sym3(cov)
            total = max(lam.sum(), 1e-300)
            result = (vecs[:, 2], float(max(lam[2], 0.0) / total), False)
        self._normals[idx] = result
        return result

    def _smooth_edge(self, a: Index, b: Index, view: LocalMapView) -> bool:
        na, _, _ = self._normal_and_curvature(a, view)
        nb, _, _ = self._normal_and_curvature(b, view)
        cos_thr = math.cos(math.radians(self.params.smoothness_angle_threshold_deg))
        return abs(float(np.dot(na, nb))) >= cos_thr

    # -- growth -------------------------------------------------------------

    def update(self, newly_active, view: LocalMapView) -> SegmentationUpdate:
        """Assign newly active cells to segments; returns what changed."""
        self.update_counter += 1
        new_cells = sorted(set(newly_active))
        if self.ground_removal:
            rng = np.random.default_rng((self.seed, self.update_counter))
            ground, _ = remove_ground(view, self.params, rng)
            new_cells = [c for c in new_cells if c not in ground]
        new_cells = [c for c in new_cells if c not in self.cell_to_segment]

        created: list[int] = []
        merges: list[tuple[int, int]] = []
        touched: set[int] = set()

        for cell in new_cells:
            neighbor_sids: set[int] = set()
            for off in self._offsets:
                n = (cell[0] + off[0], cell[1] + off[1], cell[2] + off[2])
                sid = self.cell_to_segment.get(n)
                if sid is not None:
                    seg = self.segments[sid]
                    if seg.complete:
                        continue
                    if self.method == "smoothness" and not self._smooth_edge(cell, n, view):
                        continue
                    neighbor_sids.add(sid)
            if not neighbor_sids:
                sid = self._next_id
                self._next_id += 1
                self.segments[sid] = Segment(id=sid, cells={cell},
                                             last_touched=self.update_counter,
                                             has_seed=(self.method == "euclidean"))
                self.cell_to_segment[cell] = sid
                created.append(sid)
                touched.add(sid)
            else:
                target = min(neighbor_sids)
                for other in sorted(neighbor_sids - {target}):
                    self._merge(target, other)
                    merges.append((target, other))
                    touched.discard(other)
                seg = self.segments[target]
                seg.cells.add(cell)
                self.cell_to_segment[cell] = target
                touched.add(target)
            if self.method == "smoothness":
                _, curv, flagged = self._normal_and_curvature(cell, view)
                if not flagged and curv < self.params.curvature_seed_threshold:
                    self.segments[self.cell_to_segment[cell]].has_seed = True

        for sid in sorted(touched):
            self._snapshot(sid)
        created_set = set(created)
        grown = tuple(sid for sid in sorted(touched) if sid not in created_set)
        return SegmentationUpdate(created=tuple(sorted(created_set)), grown=grown,
                                  merges=tuple(merges))

    def _merge(self, target_id: int, other_id: int) -> None:
        target = self.segments[target_id]
        other = self.segments.pop(other_id)
        for c in other.cells:
            self.cell_to_segment[c] = target_id
        target.cells |= other.cells
        target.has_seed = target.has_seed or other.has_seed
        merged = sorted(target.observations + other.observations,
                        key=lambda o: o.timestamp)
        # Keep the observation history monotone in point count.
        kept: list[SegmentObservation] = []
        for obs in merged:
            if not kept or len(obs.cloud) >= len(kept[-1].cloud):
                kept.append(obs)
        target.observations = kept
        target.last_touched = max(target.last_touched, other.last_touched)

    def _snapshot(self, sid: int) -> None:
        # One representative (mean) point per cell: snapshots are invariant to
        # how often an area was rescanned, so two robots covering the same
        # object produce matching clouds and centroids.
        seg = self.segments[sid]
        means = [self.grid.mean_point_in(c) for c in sorted(seg.cells)]
        means = [m for m in means if m is not None]
        pts = np.array(means) if means else np.empty((0, 3))
        if seg.observations and len(pts) < len(seg.observations[-1].cloud):
            return  # a cell was evicted under us; keep the larger snapshot
        cloud = PointCloud(pts)
        obs = SegmentObservation(cloud=cloud, timestamp=self.update_counter,
                                 centroid=pts.mean(axis=0) if len(pts) else np.zeros(3))
        seg.observations.append(obs)
        seg.last_touched = self.update_counter

    def retire(self, sid: int) -> None:
        """Drop a completed, published segment from active state.

        Its cells become assignable again (after grid eviction re-activates
        them), so a revisited area can segment afresh while the segment's
        descriptor lives on in the map.
        """
        seg = self.segments.pop(sid, None)
        if seg is None:
            return
        for cell in seg.cells:
            if self.cell_to_segment.get(cell) == sid:
                del self.cell_to_segment[cell]

    def forget_cells(self, indices) -> None:
        """Release evicted cells so a revisited area can segment afresh.

        Completed segments that lose their last cell are retired from state;
        their observation history lives on wherever it was published.
        """
        for cell in indices:
            sid = self.cell_to_segment.pop(cell, None)
            self._normals.pop(cell, None)
            if sid is None:
                continue
            seg = self.segments.get(sid)
            if seg is None:
                continue
            seg.cells.discard(cell)
            if not seg.cells and seg.complete:
                del self.segments[sid]

    def mark_complete(self, inactivity_horizon: int) -> list[int]:
        """Flag segments untouched for the given number of updates."""
        if inactivity_horizon < 1:
            raise ValueError("inactivity_horizon must be >= 1")
        fresh = []
        for sid in sorted(self.segments):
            seg = self.segments[sid]
            if not seg.complete and \
                    self.update_counter - seg.last_touched >= inactivity_horizon:
                seg.complete = True
                fresh.append(sid)
        return fresh

    def map_eligible(self, sid: int) -> bool:
        """Segments are withheld from the map outside the size window."""
        seg = self.segments[sid]
        n = seg.point_count()
        return (seg.has_seed and
                self.params.min_segment_points <= n <= self.params.max_segment_points)

    def partition(self) -> set[frozenset]:
        """Current partition as a set of cell sets (for oracle comparison)."""
        return {frozenset(s.cells) for s in self.segments.values()}
