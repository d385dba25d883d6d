"""Global segment map, descriptor retrieval, and 6-DoF localization.

Localization runs as retrieve -> verify -> estimate: candidate matches come
from k-NN in descriptor space, the largest geometrically consistent subset of
candidate centroid pairs is selected (pairwise distances must agree between
the local and global configurations up to a jitter epsilon), and a closed-form
least-squares rigid transform is fit to the surviving pairs. Failure to
localize is a normal outcome, reported as None.

The map accepts writes from a single mapping worker; queries run against a
lazily rebuilt index snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import segw
from .descriptor import Descriptor
from .errors import DegenerateConfiguration
from .geometry import SE3
from .kdtree import KDTree
from .semantics import SemanticClass


@dataclass(frozen=True)
class RetrievalParams:
    k_neighbors: int = 64
    consistency_epsilon: float = 0.4
    min_inliers: int = 7

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.consistency_epsilon <= 0:
            raise ValueError("consistency_epsilon must be positive")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")


@dataclass(frozen=True)
class MapEntry:
    segment_id: int
    centroid: np.ndarray
    descriptor: np.ndarray
    semantic_class: SemanticClass
    point_count: int
    robot_id: int = 0
    node_index: int = 0


@dataclass(frozen=True)
class LocalizationResult:
    transform: SE3                      # local frame -> map frame
    inliers: tuple                      # (local id, global id) pairs
    residual_rms: float


class SegmentMap:
    """One entry per segment id, indexed over descriptors for k-NN retrieval.

    Upserting an existing id replaces its descriptor, centroid and class, so
    the map always reflects the latest, most complete observation.
    """

    def __init__(self, descriptor_dim: int | None = None):
        self.descriptor_dim = descriptor_dim
        self._by_id: dict[int, MapEntry] = {}
        self._index: KDTree | None = None
        self._index_ids: list[int] = []

    def __len__(self) -> int:
        return len(self._by_id)

    def entries(self) -> list[MapEntry]:
        return [self._by_id[k] for k in sorted(self._by_id)]

    def get(self, segment_id: int) -> MapEntry | None:
        return self._by_id.get(segment_id)

    def upsert(self, segment_id: int, centroid, descriptor,
               semantic_class=SemanticClass.OTHER, point_count: int = 0,
               robot_id: int = 0, node_index: int = 0) -> None:
        values = descriptor.values if isinstance(descriptor, Descriptor) else np.asarray(
            descriptor, dtype=np.float64)
        if self.descriptor_dim is None:
            self.descriptor_dim = values.size
        elif values.size != self.descriptor_dim:
            raise ValueError(
                f"descriptor length {values.size} does not match map dimension "
                f"{self.descriptor_dim}")
        self._by_id[segment_id] = MapEntry(
            segment_id=segment_id,
            centroid=np.asarray(centroid, dtype=np.float64).reshape(3),
            descriptor=values.copy(),
            semantic_class=SemanticClass(semantic_class),
            point_count=int(point_count),
            robot_id=robot_id,
            node_index=node_index,
        )
        self._index = None

    def _ensure_index(self):
        if self._index is None:
            self._index_ids = sorted(self._by_id)
            data = np.array([self._by_id[i].descriptor for i in self._index_ids]) \
                if self._index_ids else np.empty((0, self.descriptor_dim or 1))
            self._index = KDTree(data)

    def retrieve_knn(self, query, k: int) -> list[tuple[float, MapEntry]]:
        """The min(k, N) nearest entries by L2 distance, ascending.

        Exact search; ties resolve by ascending segment id.
        """
        if not self._by_id:
            return []
        values = query.values if isinstance(query, Descriptor) else np.asarray(query)
        self._ensure_index()
        hits = self._index.query(values, min(k, len(self._by_id)))
        return [(float(np.sqrt(d2)), self._by_id[self._index_ids[i]]) for d2, i in hits]

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        entries = self.entries()
        n = len(entries)
        dim = self.descriptor_dim or 0
        segw.save_tensors(path, {
            "centroids": np.array([e.centroid for e in entries], dtype=np.float32).reshape(n, 3),
            "descriptors": np.array([e.descriptor for e in entries],
                                    dtype=np.float32).reshape(n, dim),
            "classes": np.array([int(e.semantic_class) for e in entries], dtype=np.float32),
            "ids": np.array([e.segment_id for e in entries], dtype=np.float32),
            "point_counts": np.array([e.point_count for e in entries], dtype=np.float32),
        })

    @classmethod
    def load(cls, path) -> "SegmentMap":
        t = segw.load_tensors(path)
        for name in ("centroids", "descriptors", "classes", "ids", "point_counts"):
            if name not in t:
                from .errors import WeightsFormatError
                raise WeightsFormatError("missing_tensor", name)
        out = cls(descriptor_dim=t["descriptors"].shape[1] if t["descriptors"].size else None)
        for i in range(t["ids"].shape[0]):
            out.upsert(int(t["ids"][i]), t["centroids"][i].astype(np.float64),
                       t["descriptors"][i].astype(np.float64),
                       SemanticClass(int(t["classes"][i])), int(t["point_counts"][i]))
        return out


# ---------------------------------------------------------------------------
# Geometric consistency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidatePair:
    local_id: int
    global_id: int
    local_centroid: np.ndarray
    global_centroid: np.ndarray


def _consistency_graph(pairs: list[CandidatePair], eps: float) -> np.ndarray:
    n = len(pairs)
    local = np.array([p.local_centroid for p in pairs])
    global_ = np.array([p.global_centroid for p in pairs])
    dl = np.linalg.norm(local[:, None, :] - local[None, :, :], axis=2)
    dg = np.linalg.norm(global_[:, None, :] - global_[None, :, :], axis=2)
    adj = np.abs(dl - dg) <= eps
    lids = np.array([p.local_id for p in pairs])
    gids = np.array([p.global_id for p in pairs])
    adj &= lids[:, None] != lids[None, :]   # one match per local segment
    adj &= gids[:, None] != gids[None, :]   # and per global segment
    np.fill_diagonal(adj, False)
    return adj


def _greedy_clique(adj: np.ndarray, start: int, rng=None) -> list[int]:
    clique = [start]
    cand = np.flatnonzero(adj[start])
    while cand.size:
        if rng is None:
            degs = adj[np.ix_(cand, cand)].sum(axis=1)
            pick = cand[int(np.argmax(degs))]  # argmax takes the lowest index on ties
        else:
            pick = int(rng.choice(cand))
        clique.append(int(pick))
        cand = cand[adj[pick, cand]]
    return clique


def geometric_verify(pairs: list[CandidatePair], params: RetrievalParams,
                     seed: int = 0) -> list[CandidatePair]:
    """Largest pairwise-consistent subset of candidate correspondences.

    Grows cliques greedily in the consistency graph from every vertex (capped
    at the 64 highest degrees for large problems) plus ten seeded randomized
    restarts. Returns [] when the best clique is below min_inliers.
    """
    if not pairs:
        return []
    adj = _consistency_graph(pairs, params.consistency_epsilon)
    n = len(pairs)
    degrees = adj.sum(axis=1)
    starts = np.argsort(-degrees, kind="stable")[:64]
    best: list[int] = []
    for s in starts:
        clique = _greedy_clique(adj, int(s))
        if len(clique) > len(best):
            best = clique
    rng = np.random.default_rng(seed)
    for _ in range(10):
        clique = _greedy_clique(adj, int(rng.integers(n)), rng=rng)
        if len(clique) > len(best):
            best = clique
    if len(best) < params.min_inliers:
        return []
    return [pairs[i] for i in sorted(best)]


def estimate_transform(local_points, global_points) -> SE3:
    """Closed-form least-squares rigid transform local -> global (no scale).

    SVD of the cross-covariance with reflection correction; raises
    DegenerateConfiguration for collinear or under-determined inputs.
    """
    A = np.asarray(local_points, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(global_points, dtype=np.float64).reshape(-1, 3)
    if A.shape != B.shape or A.shape[0] < 3:
        raise DegenerateConfiguration("need at least 3 correspondence pairs")
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    H = (A - ca).T @ (B - cb)
    U, S, Vt = np.linalg.svd(H)
    if S[0] <= 0 or S[1] / S[0] < 1e-9:
        raise DegenerateConfiguration("correspondences are collinear")
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    t = cb - R @ ca
    return SE3(R, t)


def localize(local_segments, segment_map: SegmentMap, params: RetrievalParams,
             drop_classes: set | None = None, seed: int = 0,
             exclude_global_ids: set | None = None) -> LocalizationResult | None:
    """Full localization pipeline over a list of local segments.

    ``local_segments`` is an iterable of (segment_id, centroid, descriptor,
    semantic_class) tuples in the local frame. Classes in ``drop_classes`` are
    excluded from both the queries and the map side. Returns None when no
    consistent set of at least min_inliers correspondences exists.
    """
    drop = {SemanticClass(c) for c in (drop_classes or set())}
    exclude = exclude_global_ids or set()

    candidates: list[CandidatePair] = []
    for seg_id, centroid, descriptor, sem_class in local_segments:
        if SemanticClass(sem_class) in drop:
            continue
        for _, entry in segment_map.retrieve_knn(descriptor, params.k_neighbors):
            if entry.semantic_class in drop or entry.segment_id in exclude \
                    or entry.segment_id == seg_id:
                continue
            candidates.append(CandidatePair(
                local_id=seg_id, global_id=entry.segment_id,
                local_centroid=np.asarray(centroid, dtype=np.float64),
                global_centroid=entry.centroid))
    inliers = geometric_verify(candidates, params, seed=seed)
    if not inliers:
        return None
    local = np.array([p.local_centroid for p in inliers])
    global_ = np.array([p.global_centroid for p in inliers])
    try:
        transform = estimate_transform(local, global_)
    except DegenerateConfiguration:
        return None
    resid = transform.apply(local) - global_
    rms = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    return LocalizationResult(
        transform=transform,
        inliers=tuple((p.local_id, p.global_id) for p in inliers),
        residual_rms=rms)
