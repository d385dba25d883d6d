"""Exact k-nearest-neighbor search over a bucketed kd-tree.

Split axis is the widest-spread dimension at each node; leaves hold small
index buckets whose distances are evaluated vectorized. Results are ordered by
(squared distance, insertion index), which makes every query reproducible and
lets tests compare against a linear scan with plain equality.
"""

from __future__ import annotations

import heapq

import numpy as np

_LEAF_SIZE = 16


class _Node:
    __slots__ = ("axis", "threshold", "left", "right", "indices")

    def __init__(self, axis=-1, threshold=0.0, left=None, right=None, indices=None):
        self.axis = axis
        self.threshold = threshold
        self.left = left
        self.right = right
        self.indices = indices


class KDTree:
    def __init__(self, data: np.ndarray):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("data must be (N, D)")
        n = self.data.shape[0]
        self.root = self._build(np.arange(n, dtype=np.int64)) if n else None

    def _build(self, idx: np.ndarray) -> _Node:
        if len(idx) <= _LEAF_SIZE:
            return _Node(indices=idx)
        pts = self.data[idx]
        spread = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] <= 0.0:
            return _Node(indices=idx)  # all duplicates: nothing to split
        order = np.argsort(pts[:, axis], kind="stable")
        mid = len(idx) // 2
        threshold = float(pts[order[mid], axis])
        left_mask = pts[:, axis] < threshold
        if not left_mask.any() or left_mask.all():
            left_mask = np.zeros(len(idx), dtype=bool)
            left_mask[order[:mid]] = True
        return _Node(axis=axis, threshold=threshold,
                     left=self._build(idx[left_mask]),
                     right=self._build(idx[~left_mask]))

    def query(self, point: np.ndarray, k: int) -> list[tuple[float, int]]:
        """The k nearest (squared distance, index) pairs, ascending."""
        if self.root is None or k < 1:
            return []
        q = np.asarray(point, dtype=np.float64)
        # Max-heap over (-d2, -idx): the root is the worst kept candidate
        # under (d2, idx) lexicographic order.
        heap: list[tuple[float, int]] = []

        def visit(node: _Node):
            if node.indices is not None:
                pts = self.data[node.indices]
                d2 = np.einsum("ij,ij->i", pts - q, pts - q)
                for dist, idx in zip(d2, node.indices):
                    item = (-float(dist), -int(idx))
                    if len(heap) < k:
                        heapq.heappush(heap, item)
                    elif item > heap[0]:
                        heapq.heapreplace(heap, item)
                return
            delta = q[node.axis] - node.threshold
            near, far = (node.right, node.left) if delta >= 0 else (node.left, node.right)
            visit(near)
            if len(heap) < k or delta * delta <= -heap[0][0]:
                visit(far)

        visit(self.root)
        return sorted((-d, -i) for d, i in heap)
