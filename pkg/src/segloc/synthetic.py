"""Deterministic synthetic worlds for end-to-end pipeline runs.

A world is a set of surface-sampled objects (boxes, cylinders, L-walls) on a
ground plane. Scans are range-gated views of the static world points,
expressed in the sensor frame, so two robots observing the same object receive
consistent geometry and their descriptors can match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SE3, PointCloud


@dataclass(frozen=True)
class SyntheticWorld:
    object_points: np.ndarray   # all object surface points, world frame
    object_ids: np.ndarray      # object index per point
    ground_points: np.ndarray


def _sample_box(rng, center, dims, density=220.0) -> np.ndarray:
    """Surface samples of an axis-aligned box, ~density points per m^2."""
    dx, dy, dz = dims
    faces = [
        ((dx, dy), lambda u, v: np.column_stack([u, v, np.zeros_like(u)])),
        ((dx, dy), lambda u, v: np.column_stack([u, v, np.full_like(u, dz)])),
        ((dx, dz), lambda u, v: np.column_stack([u, np.zeros_like(u), v])),
        ((dx, dz), lambda u, v: np.column_stack([u, np.full_like(u, dy), v])),
        ((dy, dz), lambda u, v: np.column_stack([np.zeros_like(u), u, v])),
        ((dy, dz), lambda u, v: np.column_stack([np.full_like(u, dx), u, v])),
    ]
    pts = []
    for (a, b), make in faces:
        n = max(4, int(a * b * density))
        u = rng.uniform(0, a, n)
        v = rng.uniform(0, b, n)
        pts.append(make(u, v))
    out = np.vstack(pts)
    return out - np.array([dx / 2, dy / 2, 0.0]) + np.asarray(center)


def _sample_cylinder(rng, center, radius, height, density=220.0) -> np.ndarray:
    n_side = max(8, int(2 * math.pi * radius * height * density))
    th = rng.uniform(0, 2 * math.pi, n_side)
    z = rng.uniform(0, height, n_side)
    side = np.column_stack([radius * np.cos(th), radius * np.sin(th), z])
    n_cap = max(4, int(math.pi * radius ** 2 * density))
    r = radius * np.sqrt(rng.random(n_cap))
    th2 = rng.uniform(0, 2 * math.pi, n_cap)
    cap = np.column_stack([r * np.cos(th2), r * np.sin(th2), np.full(n_cap, height)])
    return np.vstack([side, cap]) + np.asarray(center)


def _sample_lwall(rng, center, arm, height, yaw, density=220.0) -> np.ndarray:
    a = _sample_box(rng, [0, 0, 0], [arm, 0.3, height], density)
    b = _sample_box(rng, [arm / 2 - 0.15, arm / 2, 0], [0.3, arm, height], density)
    pts = np.vstack([a, b])
    return SE3.rot_z(yaw).apply(pts) + np.asarray(center)


def make_world(seed: int, extent: float = 40.0, n_objects: int = 24,
               ground_step: float = 0.35, placement: str = "corridors",
               min_spacing: float = 7.5) -> SyntheticWorld:
    """Scatter shape-varied objects over a ground plane, avoiding overlap.

    placement "corridors" flanks the two axis roads (crossing scenarios);
    "ring" concentrates objects around the origin (loop scenarios).
    """
    rng = np.random.default_rng(seed)
    pts, ids = [], []
    placed: list[np.ndarray] = []
    i = 0
    attempts = 0
    while i < n_objects and attempts < n_objects * 60:
        attempts += 1
        if placement == "corridors":
            # Flank the two road corridors (x axis and y axis) so trajectories
            # along either road pass distinctive structure, sharing the
            # objects near the crossing.
            along = rng.uniform(-extent, extent)
            lateral = rng.uniform(4.0, 13.0) * rng.choice([-1.0, 1.0])
            center = np.array([along, lateral]) if rng.random() < 0.5 \
                else np.array([lateral, along])
        else:
            radius = rng.uniform(4.5, 0.55 * extent)
            angle = rng.uniform(0, 2 * math.pi)
            center = radius * np.array([math.cos(angle), math.sin(angle)])
        if placed and np.min(np.linalg.norm(np.array(placed) - center, axis=1)) < min_spacing:
            continue
        if np.linalg.norm(center) < 3.5:
            continue  # keep the crossing area drivable
        kind = i % 3
        c3 = np.array([center[0], center[1], 0.0])
        if kind == 0:
            dims = rng.uniform([1.2, 0.8, 1.0], [4.0, 2.4, 3.0])
            obj = _sample_box(rng, c3, dims)
        elif kind == 1:
            obj = _sample_cylinder(rng, c3, rng.uniform(0.5, 1.4), rng.uniform(1.5, 4.0))
        else:
            obj = _sample_lwall(rng, c3, rng.uniform(2.5, 4.5), rng.uniform(1.5, 3.0),
                                rng.uniform(0, 2 * math.pi))
        placed.append(center)
        pts.append(obj)
        ids.append(np.full(len(obj), i))
        i += 1
    xs = np.arange(-extent - 5, extent + 5, ground_step)
    gx, gy = np.meshgrid(xs, xs)
    ground = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    return SyntheticWorld(object_points=np.vstack(pts), object_ids=np.concatenate(ids),
                          ground_points=ground)


def scan_at(world: SyntheticWorld, pose: SE3, max_range: float = 18.0,
            include_ground: bool = True) -> PointCloud:
    """Range-gated view of the world in the sensor frame of ``pose``."""
    pos = pose.translation
    inv = pose.inverse()
    sel = np.linalg.norm(world.object_points[:, :2] - pos[:2], axis=1) <= max_range
    pts = world.object_points[sel]
    if include_ground:
        gsel = np.linalg.norm(world.ground_points[:, :2] - pos[:2], axis=1) <= max_range
        pts = np.vstack([pts, world.ground_points[gsel]])
    return PointCloud(inv.apply(pts))


def heading_pose(x: float, y: float, yaw: float) -> SE3:
    return SE3.rot_z(yaw, translation=np.array([x, y, 0.0]))


def figure_eight_trajectory(n_nodes: int, size: float = 25.0) -> list[SE3]:
    """Lemniscate visiting the origin twice with different headings."""
    poses = []
    for i in range(n_nodes):
        t = 2 * math.pi * i / n_nodes
        x = size * math.sin(t)
        y = size * math.sin(t) * math.cos(t)
        dx = size * math.cos(t)
        dy = size * math.cos(2 * t)
        poses.append(heading_pose(x, y, math.atan2(dy, dx)))
    return poses


def crossing_trajectories(n_nodes: int, span: float = 35.0) -> tuple[list[SE3], list[SE3]]:
    """Two straight trajectories through a shared intersection: one eastbound
    along x, one northbound along y (world frame)."""
    east = [heading_pose(-span + 2 * span * i / (n_nodes - 1), 0.0, 0.0)
            for i in range(n_nodes)]
    north = [heading_pose(0.0, -span + 2 * span * i / (n_nodes - 1), math.pi / 2)
             for i in range(n_nodes)]
    return east, north


def drift_odometry(true_poses: list[SE3], rng, noise_scale: float = 0.01) -> list[SE3]:
    """Relative measurements with multiplicative noise ~ noise_scale of step."""
    from .geometry import se3_exp
    out = []
    for a, b in zip(true_poses[:-1], true_poses[1:]):
        z = a.inverse().compose(b)
        step = np.linalg.norm(z.translation)
        d = rng.normal(scale=noise_scale, size=6) * np.array(
            [0.1, 0.1, 1.0, 1.0, 0.3, 0.05]) * max(step, 0.1)
        out.append(z.compose(se3_exp(d)))
    return out
