"""Ground-truth generation and retrieval/localization/compression metrics.

Two observations are declared the same physical segment when the volume IoU of
their convex hulls passes a threshold (centroid-gated to keep the pair count
tractable). The polytope intersection is computed exactly by clipping one hull
successively with the other's facet half-spaces; volumes come from summing
tetrahedra against an interior point (divergence theorem over the triangulated
boundary). A Monte-Carlo estimate exists in the tests only, as an independent
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateHull
from .localization import SegmentMap

DESCRIPTOR_LINKAGE_BITS = 288
BYTES_PER_POINT = 12  # three 32-bit floats


@dataclass(frozen=True)
class GroundTruthParams:
    overlap_p: float = 0.3
    max_centroid_distance: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.overlap_p <= 1.0:
            raise ValueError("overlap_p must be in (0, 1]")
        if self.max_centroid_distance <= 0:
            raise ValueError("max_centroid_distance must be positive")


@dataclass(frozen=True)
class ROCCurve:
    points: np.ndarray  # (N, 2) of (FPR, TPR), ascending
    auc: float


@dataclass(frozen=True)
class CompressionStats:
    raw_bytes: int
    descriptor_bytes: int
    ratio: float
    segment_count: int
    descriptor_dim: int


# ---------------------------------------------------------------------------
# Convex hull overlap (volume IoU)
# ---------------------------------------------------------------------------

def _hull_or_raise(points: np.ndarray) -> ConvexHull:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 4:
        raise DegenerateHull("need at least 4 points for a 3D hull")
    try:
        return ConvexHull(pts)
    except QhullError as e:
        raise DegenerateHull(f"degenerate hull: {e}") from e


def _volume_from_vertices(vertices: np.ndarray) -> float:
    """Sum of boundary tetrahedra against an interior point."""
    if vertices.shape[0] < 4:
        return 0.0
    try:
        hull = ConvexHull(vertices)
    except QhullError:
        return 0.0  # flat residue after clipping
    p = vertices[hull.vertices].mean(axis=0)
    total = 0.0
    for simplex in hull.simplices:
        a, b, c = vertices[simplex] - p
        total += abs(np.linalg.det(np.stack([a, b, c]))) / 6.0
    return total


def _clip_polytope(vertices: np.ndarray, normal: np.ndarray, offset: float,
                   tol: float) -> np.ndarray:
    """Clip a convex vertex set by the half-space normal . x + offset <= 0."""
    dist = vertices @ normal + offset
    inside = dist <= tol
    if inside.all():
        return vertices
    if not inside.any():
        return vertices[:0]
    kept = [v for v in vertices[inside]]
    if vertices.shape[0] >= 4:
        try:
            hull = ConvexHull(vertices)
            edges = {tuple(sorted((s[i], s[j])))
                     for s in hull.simplices for i in range(3) for j in range(i + 1, 3)}
        except QhullError:
            edges = {(i, j) for i in range(len(vertices)) for j in range(i + 1, len(vertices))}
    else:
        edges = {(i, j) for i in range(len(vertices)) for j in range(i + 1, len(vertices))}
    for i, j in edges:
        di, dj = dist[i], dist[j]
        if (di > tol and dj < -tol) or (dj > tol and di < -tol):
            t = di / (di - dj)
            kept.append(vertices[i] + t * (vertices[j] - vertices[i]))
    out = np.array(kept)
    # Weld near-duplicates so later hulls stay well conditioned.
    rounded = np.round(out / max(tol, 1e-12))
    _, unique_idx = np.unique(rounded, axis=0, return_index=True)
    return out[np.sort(unique_idx)]


def hull_overlap(cloud_a, cloud_b) -> float:
    """Volume IoU of the convex hulls of two clouds, in [0, 1]."""
    pts_a = getattr(cloud_a, "points", cloud_a)
    pts_b = getattr(cloud_b, "points", cloud_b)
    hull_a = _hull_or_raise(pts_a)
    hull_b = _hull_or_raise(pts_b)
    va = _volume_from_vertices(np.asarray(pts_a)[hull_a.vertices])
    vb = _volume_from_vertices(np.asarray(pts_b)[hull_b.vertices])
    if va <= 0.0 or vb <= 0.0:
        raise DegenerateHull("hull has zero volume")

    scale = max(1.0, float(np.max(np.abs(np.asarray(pts_a)))),
                float(np.max(np.abs(np.asarray(pts_b)))))
    tol = 1e-12 * scale
    poly = np.asarray(pts_a, dtype=np.float64)[hull_a.vertices]
    for eq in hull_b.equations:  # rows are (normal, offset) with n.x + d <= 0 inside
        poly = _clip_polytope(poly, eq[:3], eq[3], tol)
        if poly.shape[0] < 4:
            return 0.0
    v_inter = _volume_from_vertices(poly)
    v_union = va + vb - v_inter
    return float(v_inter / v_union)


def generate_gt(segments, params: GroundTruthParams) -> list[tuple[int, int, float]]:
    """All segment pairs close in space whose hull IoU reaches overlap_p.

    ``segments`` is an iterable of (id, cloud) with map-frame points. Pairs
    whose hulls are degenerate are skipped.
    """
    items = []
    for seg_id, cloud in segments:
        pts = getattr(cloud, "points", np.asarray(cloud))
        items.append((seg_id, pts, pts.mean(axis=0)))
    out = []
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            id_a, pts_a, ca = items[i]
            id_b, pts_b, cb = items[j]
            if np.linalg.norm(ca - cb) > params.max_centroid_distance:
                continue
            try:
                overlap = hull_overlap(pts_a, pts_b)
            except DegenerateHull:
                continue
            if overlap >= params.overlap_p:
                out.append((id_a, id_b, overlap))
    return out


# ---------------------------------------------------------------------------
# Retrieval curves
# ---------------------------------------------------------------------------

def pair_distances(pairs) -> np.ndarray:
    return np.array([float(np.linalg.norm(np.asarray(a, dtype=np.float64) -
                                          np.asarray(b, dtype=np.float64)))
                     for a, b in pairs])


def build_roc(positives, negatives) -> ROCCurve:
    """Threshold sweep over the L2 distances of labeled descriptor pairs."""
    pos = pair_distances(positives)
    neg = pair_distances(negatives)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative pair")
    thresholds = np.unique(np.concatenate([pos, neg]))
    pts = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(np.mean(neg <= t))
        tpr = float(np.mean(pos <= t))
        if (fpr, tpr) != pts[-1]:
            pts.append((fpr, tpr))
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    arr = np.array(pts)
    auc = float(np.trapezoid(arr[:, 1], arr[:, 0]))
    return ROCCurve(points=arr, auc=auc)


def knn_needed_curve(observations, segment_map: SegmentMap,
                     bins: int = 10) -> tuple[list, int]:
    """Median neighbour count needed to hit the right map segment, binned by
    observation completeness.

    ``observations`` is an iterable of (descriptor, target segment id,
    completeness in (0, 1]). Observations whose target is missing from the map
    are skipped and counted. Returns (per-bin medians with bin edges, skipped).
    """
    ranks_by_bin: list[list[int]] = [[] for _ in range(bins)]
    skipped = 0
    n = len(segment_map)
    for descriptor, target_id, completeness in observations:
        if segment_map.get(target_id) is None:
            skipped += 1
            continue
        hits = segment_map.retrieve_knn(descriptor, n)
        rank = next(i for i, (_, e) in enumerate(hits, start=1)
                    if e.segment_id == target_id)
        b = min(int(completeness * bins), bins - 1)
        ranks_by_bin[b].append(rank)
    out = []
    for b in range(bins):
        lo, hi = b / bins, (b + 1) / bins
        median = float(np.median(ranks_by_bin[b])) if ranks_by_bin[b] else None
        out.append((lo, hi, median, len(ranks_by_bin[b])))
    return out, skipped


# ---------------------------------------------------------------------------
# Compression and localization accounting
# ---------------------------------------------------------------------------

def descriptor_entry_bytes(descriptor_dim: int) -> float:
    return 4 * descriptor_dim + DESCRIPTOR_LINKAGE_BITS / 8


def compression_stats(segment_map: SegmentMap,
                      raw_point_count: int | None = None) -> CompressionStats:
    """Raw-points versus descriptor-map size accounting.

    ``raw_point_count`` defaults to the sum of stored per-segment point
    counts; pass the full environment's count explicitly when the map has been
    filtered (the raw map does not shrink when entries are dropped).
    """
    entries = segment_map.entries()
    dim = segment_map.descriptor_dim or 0
    if raw_point_count is None:
        raw_point_count = sum(e.point_count for e in entries)
    raw_bytes = int(raw_point_count * BYTES_PER_POINT)
    descriptor_bytes = int(round(len(entries) * descriptor_entry_bytes(dim)))
    ratio = raw_bytes / descriptor_bytes if descriptor_bytes else float("inf")
    return CompressionStats(raw_bytes=raw_bytes, descriptor_bytes=descriptor_bytes,
                            ratio=ratio, segment_count=len(entries),
                            descriptor_dim=dim)


def localization_error_cdf(estimated_translations, true_translations) -> np.ndarray:
    """CDF of position errors over all queries, failures included.

    ``estimated_translations`` may contain None for failed localizations; the
    curve then saturates below 1. Returns (error, cumulative fraction) rows.
    """
    total = len(estimated_translations)
    if total != len(true_translations):
        raise ValueError("estimate and ground-truth counts differ")
    errors = sorted(
        float(np.linalg.norm(np.asarray(est) - np.asarray(gt)))
        for est, gt in zip(estimated_translations, true_translations)
        if est is not None)
    return np.array([(e, (i + 1) / total) for i, e in enumerate(errors)])
