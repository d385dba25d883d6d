"""Point-cloud augmentation applied before voxelization.

Per sample: a random rotation about the vertical axis, then a random slicing
plane resampled until it removes at most half the points (occlusion), then
uniform random dropout of at most a tenth of the remainder (sensor noise). The
composition always keeps at least 45% of the input points.
"""

from __future__ import annotations

import numpy as np

MAX_SLICE_FRACTION = 0.5
MAX_DROPOUT_FRACTION = 0.1
_SLICE_ATTEMPTS = 50


def rotate_z(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return points @ R.T


def slice_plane(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Drop everything on one side of a random plane, rejecting cuts that
    would remove more than half the points."""
    n = len(points)
    for _ in range(_SLICE_ATTEMPTS):
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        d = points @ normal
        offset = rng.uniform(d.min(), d.max())
        keep = d <= offset
        removed = n - int(keep.sum())
        if 0 < removed <= MAX_SLICE_FRACTION * n:
            return points[keep]
    return points


def dropout(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    n_drop = int(np.floor(rng.uniform(0.0, MAX_DROPOUT_FRACTION) * n))
    if n_drop == 0:
        return points
    drop_idx = rng.choice(n, size=n_drop, replace=False)
    mask = np.ones(n, dtype=bool)
    mask[drop_idx] = False
    return points[mask]


def augment(points: np.ndarray, seed) -> np.ndarray:
    """Deterministic augmentation for a given seed."""
    rng = np.random.default_rng(seed)
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("cannot augment an empty cloud")
    pts = rotate_z(pts, rng.uniform(0.0, 2 * np.pi))
    pts = slice_plane(pts, rng)
    pts = dropout(pts, rng)
    return pts
