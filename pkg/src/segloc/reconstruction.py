"""Decoding descriptors back into occupancy and meshing the result.

The decoder mirrors the encoder in reverse: one dense layer reshaped to a
coarse feature volume, then three stride-2 transposed convolutions up to the
full 32x32x16 grid, squashed through a sigmoid. Reconstruction quality is
scored by a symmetric one-voxel-tolerance correspondence ratio, and meshes are
extracted with the classic table-driven marching cubes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nnops, segw
from ._mc_tables import CORNERS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .descriptor import Descriptor, NetworkWeights
from .errors import EmptyOriginal, WeightsFormatError
from .preprocess import GRID_DIMS, VoxelizedInput


@dataclass(frozen=True)
class OccupancyGrid:
    """Per-voxel occupancy probabilities plus the metric voxel size."""

    probs: np.ndarray
    voxel_sides: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != GRID_DIMS:
            raise ValueError(f"grid must be {GRID_DIMS}, got {p.shape}")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "voxel_sides", np.asarray(self.voxel_sides, dtype=np.float64))


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray   # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int indices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def surface_area(self) -> float:
        if not len(self.triangles):
            return 0.0
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.linalg.norm(np.cross(b - a, c - a), axis=1).sum() / 2.0)

    def signed_volume(self) -> float:
        if not len(self.triangles):
            return 0.0
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def decode(descriptor: Descriptor, weights: NetworkWeights,
           voxel_sides=None) -> OccupancyGrid:
    """Deterministic decoder forward pass; output bounded by the sigmoid."""
    if weights.architecture_id != "decoder-v1":
        raise WeightsFormatError(
            "unknown_architecture", f"decode needs decoder-v1, got {weights.architecture_id}")
    d = descriptor.values if isinstance(descriptor, Descriptor) else np.asarray(descriptor)
    if d.shape != (64,):
        raise WeightsFormatError("shape_mismatch", f"decoder expects a 64-d descriptor, got {d.shape}")
    t = weights.tensor
    h = nnops.relu(nnops.dense(d.astype(np.float64), t("fc.weight"), t("fc.bias")))
    x = h.reshape(64, 4, 4, 2)
    x = nnops.relu(nnops.conv_transpose3d_x2(x, t("deconv1.weight"), t("deconv1.bias")))
    x = nnops.relu(nnops.conv_transpose3d_x2(x, t("deconv2.weight"), t("deconv2.bias")))
    x = nnops.conv_transpose3d_x2(x, t("deconv3.weight"), t("deconv3.bias"))
    probs = nnops.sigmoid(x[0])
    sides = np.ones(3) * 0.1 if voxel_sides is None else np.asarray(voxel_sides, dtype=np.float64)
    return OccupancyGrid(probs=probs, voxel_sides=sides)


def _dilate_chebyshev1(occ: np.ndarray) -> np.ndarray:
    """Binary dilation by one voxel in Chebyshev distance (3x3x3 max filter)."""
    padded = np.pad(occ.astype(bool), 1)
    win = sliding_window_view(padded, (3, 3, 3))
    return win.any(axis=(3, 4, 5))


def correspondence_ratio(original: VoxelizedInput, recon: OccupancyGrid,
                         threshold: float = 0.5) -> float:
    """Symmetric mean of directed one-voxel correspondence fractions.

    The reconstruction is binarized at ``threshold``; a voxel corresponds when
    a voxel of the other grid is occupied within Chebyshev distance one. If
    one side is empty after binarization the ratio is 0.
    """
    orig = np.asarray(original.grid, dtype=bool)
    if orig.shape != tuple(GRID_DIMS) or np.asarray(recon.probs).shape != tuple(GRID_DIMS):
        raise ValueError("grids must share the fixed dimensions")
    if not orig.any():
        raise EmptyOriginal("original grid has no occupied voxels")
    rec = np.asarray(recon.probs) >= threshold
    if not rec.any():
        return 0.0
    hit_o = (orig & _dilate_chebyshev1(rec)).sum() / orig.sum()
    hit_r = (rec & _dilate_chebyshev1(orig)).sum() / rec.sum()
    return float((hit_o + hit_r) / 2.0)


def marching_cubes(grid: OccupancyGrid, iso: float = 0.5) -> TriangleMesh:
    """Extract the iso-surface as a triangle mesh in metric coordinates.

    Scalar samples sit at voxel centers, spaced by voxel_sides. Vertices are
    interpolated along crossing edges; duplicates are welded at a tolerance of
    1e-6 of the smallest voxel side. Degenerate (zero-area) triangles are
    dropped. Triangles wind so occupied regions get outward normals and a
    positive enclosed volume.
    """
    if not 0.0 < iso < 1.0:
        raise ValueError("iso must be in (0, 1)")
    values = np.asarray(grid.probs, dtype=np.float64)
    sides = grid.voxel_sides
    nx, ny, nz = values.shape
    weld_tol = 1e-6 * float(np.min(sides))

    vert_map: dict[tuple[int, int, int], int] = {}
    vertices: list[np.ndarray] = []
    triangles: list[tuple[int, int, int]] = []

    def add_vertex(p: np.ndarray) -> int:
        key = tuple(int(round(c / weld_tol)) for c in p)
        idx = vert_map.get(key)
        if idx is None:
            idx = len(vertices)
            vert_map[key] = idx
            vertices.append(p)
        return idx

    corner_vals = np.empty(8)
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                cube_index = 0
                for c, (dx, dy, dz) in enumerate(CORNERS):
                    corner_vals[c] = values[i + dx, j + dy, k + dz]
                    if corner_vals[c] < iso:
                        cube_index |= 1 << c
                edges = EDGE_TABLE[cube_index]
                if edges == 0:
                    continue
                edge_vertex = [None] * 12
                for e in range(12):
                    if not edges & (1 << e):
                        continue
                    a, b = EDGE_CORNERS[e]
                    va, vb = corner_vals[a], corner_vals[b]
                    t = 0.5 if vb == va else (iso - va) / (vb - va)
                    ca = np.array(CORNERS[a], dtype=np.float64)
                    cb = np.array(CORNERS[b], dtype=np.float64)
                    p = (np.array([i, j, k]) + ca + t * (cb - ca)) * sides
                    edge_vertex[e] = add_vertex(p)
                tri = TRI_TABLE[cube_index]
                for m in range(0, len(tri), 3):
                    ia, ib, ic = (edge_vertex[tri[m]], edge_vertex[tri[m + 1]],
                                  edge_vertex[tri[m + 2]])
                    if ia == ib or ib == ic or ia == ic:
                        continue
                    pa, pb, pc = vertices[ia], vertices[ib], vertices[ic]
                    area2 = np.linalg.norm(np.cross(pb - pa, pc - pa))
                    if area2 <= 2e-12:
                        continue
                    triangles.append((ia, ib, ic))

    if not vertices:
        return TriangleMesh(vertices=np.empty((0, 3)), triangles=np.empty((0, 3), dtype=np.int64))
    return TriangleMesh(vertices=np.array(vertices), triangles=np.array(triangles, dtype=np.int64))


def write_obj(path, mesh: TriangleMesh) -> None:
    """ASCII OBJ export with 1-based face indices."""
    with open(path, "w", encoding="ascii") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def save_grid(path, grid: OccupancyGrid) -> None:
    """Export an occupancy grid in the shared tensor container."""
    segw.save_tensors(path, {
        "occupancy": grid.probs.astype(np.float32),
        "voxel_sides": grid.voxel_sides.astype(np.float32),
    })


def load_grid(path) -> OccupancyGrid:
    tensors = segw.load_tensors(path)
    if "occupancy" not in tensors:
        raise WeightsFormatError("missing_tensor", "occupancy")
    sides = tensors.get("voxel_sides", np.float32([0.1, 0.1, 0.1]))
    return OccupancyGrid(probs=np.clip(tensors["occupancy"].astype(np.float64), 0.0, 1.0),
                         voxel_sides=sides.astype(np.float64))
