"""Training datasets: class assignment from correspondences, synthetic
primitives for desk-scale runs, and segment-file ingestion.

A training class collects every observation of one physical object, so
correspondence pairs are merged transitively (union-find) into classes.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .augment import augment
from .voxelize import cloud_to_input


# ---------------------------------------------------------------------------
# Class building
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_classes(segment_ids, correspondences,
                  min_samples: int = 1,
                  observation_counts: dict | None = None) -> dict:
    """Map each segment id to a dense class index.

    Segments linked by correspondences (transitively) share a class. Classes
    whose total observation count falls below ``min_samples`` are dropped
    (their segments are absent from the result).
    """
    uf = _UnionFind()
    for sid in segment_ids:
        uf.find(sid)
    for a, b in correspondences:
        uf.union(a, b)
    groups: dict = {}
    for sid in segment_ids:
        groups.setdefault(uf.find(sid), []).append(sid)
    counts = observation_counts or {}
    result = {}
    next_class = 0
    for root in sorted(groups):
        members = groups[root]
        total = sum(counts.get(s, 1) for s in members)
        if total < min_samples:
            continue
        for s in members:
            result[s] = next_class
        next_class += 1
    return result


def read_correspondence_csv(path) -> list[tuple[int, int]]:
    """Pairs CSV with id_a/id_b columns (the gt-gen artifact)."""
    with open(path, newline="", encoding="ascii") as f:
        return [(int(row["id_a"]), int(row["id_b"])) for row in csv.DictReader(f)]


# ---------------------------------------------------------------------------
# Synthetic primitive objects (desk-scale stand-in for drive data)
# ---------------------------------------------------------------------------

def _box(rng, dims, n=1400):
    dx, dy, dz = dims
    areas = np.array([dx * dy, dx * dy, dx * dz, dx * dz, dy * dz, dy * dz], dtype=float)
    counts = np.maximum(8, (areas / areas.sum() * n).astype(int))
    pts = []
    for face, m in enumerate(counts):
        u = rng.uniform(0, 1, size=(m, 2))
        if face < 2:
            p = np.column_stack([u[:, 0] * dx, u[:, 1] * dy, np.full(m, 0.0 if face == 0 else dz)])
        elif face < 4:
            p = np.column_stack([u[:, 0] * dx, np.full(m, 0.0 if face == 2 else dy), u[:, 1] * dz])
        else:
            p = np.column_stack([np.full(m, 0.0 if face == 4 else dx), u[:, 0] * dy, u[:, 1] * dz])
        pts.append(p)
    out = np.vstack(pts)
    return out - [dx / 2, dy / 2, dz / 2]


def _cylinder(rng, radius, height, n=1400):
    n_side = int(n * 0.8)
    th = rng.uniform(0, 2 * np.pi, n_side)
    z = rng.uniform(0, height, n_side)
    side = np.column_stack([radius * np.cos(th), radius * np.sin(th), z])
    n_cap = n - n_side
    r = radius * np.sqrt(rng.random(n_cap))
    th2 = rng.uniform(0, 2 * np.pi, n_cap)
    cap = np.column_stack([r * np.cos(th2), r * np.sin(th2), np.full(n_cap, height)])
    return np.vstack([side, cap]) - [0, 0, height / 2]


def _lshape(rng, arm, height, n=1400):
    a = _box(rng, (arm, 0.3, height), n // 2)
    b = _box(rng, (0.3, arm, height), n - n // 2) + [arm / 2, arm / 2, 0]
    return np.vstack([a, b])


def _plane(rng, w, h, n=1400):
    u = rng.uniform(0, 1, size=(n, 2))
    pts = np.column_stack([u[:, 0] * w, rng.normal(scale=0.02, size=n), u[:, 1] * h])
    return pts - [w / 2, 0, h / 2]


@dataclass(frozen=True)
class SyntheticObject:
    class_index: int
    points: np.ndarray
    kind: str


def synthetic_objects(n_classes: int = 20, seed: int = 0) -> list[SyntheticObject]:
    """Distinct compound objects; each is one training class.

    Every class is a union of a primary primitive and one or two attached
    parts with class-specific proportions and placement, so classes differ in
    normalized shape, not only in metric size (per-axis grid scaling erases
    pure size differences).
    """
    rng = np.random.default_rng(seed)
    makers = ("box", "cylinder", "lshape", "plane")
    out = []
    for c in range(n_classes):
        kind = makers[c % len(makers)]
        size_scale = 1.0 + 0.4 * (c // len(makers))
        if kind == "box":
            aspect = rng.uniform([1.0, 0.4, 0.5], [3.0, 2.0, 2.5])
            parts = [_box(rng, aspect * size_scale)]
        elif kind == "cylinder":
            parts = [_cylinder(rng, rng.uniform(0.3, 1.0) * size_scale,
                               rng.uniform(0.8, 2.8) * size_scale)]
        elif kind == "lshape":
            parts = [_lshape(rng, rng.uniform(1.2, 3.2) * size_scale,
                             rng.uniform(0.8, 2.2) * size_scale)]
        else:
            parts = [_plane(rng, rng.uniform(1.5, 3.5) * size_scale,
                            rng.uniform(1.0, 2.5) * size_scale)]
        base_extent = parts[0].max(axis=0) - parts[0].min(axis=0)
        for _ in range(int(rng.integers(1, 3))):
            attach_kind = rng.choice(["box", "cylinder"])
            frac = rng.uniform(0.25, 0.6)
            if attach_kind == "box":
                part = _box(rng, np.maximum(base_extent * frac *
                                            rng.uniform(0.4, 1.2, size=3), 0.15), n=500)
            else:
                part = _cylinder(rng, max(0.12, frac * base_extent[0] / 3),
                                 max(0.3, frac * base_extent[2]), n=500)
            offset = rng.uniform(-0.5, 0.5, size=3) * base_extent
            offset[2] = rng.uniform(0.0, 0.6) * base_extent[2]
            parts.append(part + offset)
        pts = np.vstack(parts)
        out.append(SyntheticObject(class_index=c, points=pts, kind=kind))
    return out


@dataclass
class Sample:
    grid: np.ndarray     # (32, 32, 16) uint8
    scale: np.ndarray    # metric extent, 3 floats
    label: int


def epoch_samples(objects, epoch: int, views_per_object: int = 10,
                  seed: int = 0) -> list[Sample]:
    """Fresh augmented views of every object, re-rolled each epoch."""
    samples = []
    for obj in objects:
        for v in range(views_per_object):
            pts = augment(obj.points, seed=(seed, epoch, obj.class_index, v))
            grid, sides, extent = cloud_to_input(pts)
            samples.append(Sample(grid=grid, scale=extent, label=obj.class_index))
    return samples


def segments_from_files(paths, fmt: str = "xyz-text") -> list[tuple[int, np.ndarray]]:
    """Segment clouds from xyz text files named with trailing integer ids."""
    import re
    out = []
    for p in paths:
        m = re.search(r"(\d+)\D*$", os.path.basename(p))
        if not m:
            raise ValueError(f"no id in file name {p!r}")
        pts = np.loadtxt(p, ndmin=2)
        out.append((int(m.group(1)), pts[:, :3]))
    return out
