"""Semantic labeling of descriptors and class-based map filtering.

A small dense head maps a descriptor to probabilities over three classes.
Vehicles are inherently dynamic, so dropping them from retrieval improves
robustness and shrinks the map.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import nnops
from .descriptor import Descriptor, NetworkWeights
from .errors import WeightsFormatError


class SemanticClass(IntEnum):
    VEHICLE = 0
    BUILDING = 1
    OTHER = 2


@dataclass(frozen=True)
class SemanticPrediction:
    semantic_class: SemanticClass
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64).reshape(3)
        if abs(p.sum() - 1.0) > 1e-6:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "probabilities", p)


def classify(descriptor: Descriptor, weights: NetworkWeights) -> SemanticPrediction:
    """Two dense layers plus softmax; argmax ties break by class order."""
    if weights.architecture_id != "semantics-v1":
        raise WeightsFormatError(
            "unknown_architecture",
            f"classify needs semantics-v1, got {weights.architecture_id}")
    d = descriptor.values if isinstance(descriptor, Descriptor) else np.asarray(descriptor)
    if d.shape != (64,):
        raise WeightsFormatError("shape_mismatch",
                                 f"semantics head expects a 64-d descriptor, got {d.shape}")
    t = weights.tensor
    h = nnops.relu(nnops.dense(d.astype(np.float64), t("fc1.weight"), t("fc1.bias")))
    probs = nnops.softmax(nnops.dense(h, t("fc2.weight"), t("fc2.bias")))
    # np.argmax already returns the first (lowest class value) on exact ties.
    cls = SemanticClass(int(np.argmax(probs)))
    return SemanticPrediction(semantic_class=cls, probabilities=probs)


def filter_map(segment_map, drop: set) -> "SegmentMap":
    """New map containing exactly the entries whose class is not dropped."""
    from .localization import SegmentMap
    drop = {SemanticClass(d) for d in drop}
    kept = [e for e in segment_map.entries() if e.semantic_class not in drop]
    out = SegmentMap(descriptor_dim=segment_map.descriptor_dim)
    for e in kept:
        out.upsert(e.segment_id, e.centroid, e.descriptor, e.semantic_class,
                   e.point_count)
    return out
