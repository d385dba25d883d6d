"""Compact segment descriptors: the learned network forward pass and the
handcrafted eigenvalue baseline.

The descriptor network compresses an aligned, scaled 32x32x16 occupancy grid
(plus the original metric extent of the segment) into a short real vector used
for retrieval, reconstruction and semantic labeling. Weights live in the SEGW
container and are validated against a fixed per-architecture shape table, so
stored weights and the code that consumes them cannot drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnops, segw
from .errors import DegenerateSegment, InvalidWeights, WeightsFormatError
from .geometry import PointCloud, eig_sym3
from .preprocess import GRID_DIMS, VoxelizedInput

SCALE_NORMALIZER_M = 10.0  # metric extents are divided by this before the first dense layer


def _conv_stack_shapes(filters: tuple[int, int, int], fc: tuple[int, int]) -> dict[str, tuple]:
    f1, f2, f3 = filters
    flat = f3 * (GRID_DIMS[0] // 4) * (GRID_DIMS[1] // 4) * (GRID_DIMS[2] // 4)
    shapes = {
        "conv1.weight": (f1, 1, 3, 3, 3), "conv1.bias": (f1,),
        "conv2.weight": (f2, f1, 3, 3, 3), "conv2.bias": (f2,),
        "conv3.weight": (f3, f2, 3, 3, 3), "conv3.bias": (f3,),
        "fc1.weight": (fc[0], flat + 3), "fc1.bias": (fc[0],),
        "fc2.weight": (fc[1], fc[0]), "fc2.bias": (fc[1],),
    }
    for i, f in enumerate(filters, start=1):
        for p in ("gamma", "beta", "mean", "var"):
            shapes[f"bn{i}.{p}"] = (f,)
    return shapes


# Fixed hyperparameters per architecture id. The lightweight variant halves
# every convolution filter count and every dense layer width.
ENCODER_SPECS = {
    "segmap-v1": {"filters": (32, 64, 64), "fc": (512, 64)},
    "segmini-v1": {"filters": (16, 32, 32), "fc": (256, 32)},
}

ARCHITECTURES: dict[str, dict[str, tuple]] = {
    name: _conv_stack_shapes(spec["filters"], spec["fc"])
    for name, spec in ENCODER_SPECS.items()
}
ARCHITECTURES["decoder-v1"] = {
    "fc.weight": (2048, 64), "fc.bias": (2048,),
    "deconv1.weight": (64, 64, 3, 3, 3), "deconv1.bias": (64,),
    "deconv2.weight": (64, 32, 3, 3, 3), "deconv2.bias": (32,),
    "deconv3.weight": (32, 1, 3, 3, 3), "deconv3.bias": (1,),
}
ARCHITECTURES["semantics-v1"] = {
    "fc1.weight": (32, 64), "fc1.bias": (32,),
    "fc2.weight": (3, 32), "fc2.bias": (3,),
}

DESCRIPTOR_DIM = {"segmap-v1": 64, "segmini-v1": 32, "eigen-v1": 7}


@dataclass(frozen=True)
class Descriptor:
    """Fixed-length real vector plus the architecture variant that made it."""

    values: np.ndarray
    variant: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor contains non-finite values")
        expected = DESCRIPTOR_DIM.get(self.variant)
        if expected is not None and v.size != expected:
            raise ValueError(f"variant {self.variant} expects length {expected}, got {v.size}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class NetworkWeights:
    """Named float32 tensors validated against a known architecture."""

    tensors: dict[str, np.ndarray]
    architecture_id: str

    def tensor(self, name: str, dtype=np.float64) -> np.ndarray:
        return self.tensors[name].astype(dtype)


def _match_architecture(tensors: dict[str, np.ndarray], expect: str | None) -> str:
    candidates = [expect] if expect else list(ARCHITECTURES)
    if expect and expect not in ARCHITECTURES:
        raise WeightsFormatError("unknown_architecture", expect)
    last_error = None
    for arch in candidates:
        required = ARCHITECTURES[arch]
        missing = sorted(set(required) - set(tensors))
        if missing:
            last_error = WeightsFormatError(
                "missing_tensor", f"{arch} requires {missing[0]}")
            continue
        bad = [n for n in required if tuple(tensors[n].shape) != required[n]]
        if bad:
            n = bad[0]
            last_error = WeightsFormatError(
                "shape_mismatch",
                f"{arch} tensor {n}: expected {required[n]}, got {tuple(tensors[n].shape)}")
            continue
        return arch
    raise last_error or WeightsFormatError("unknown_architecture", "no architecture matches")


def load_weights(path, expect: str | None = None) -> NetworkWeights:
    """Load and validate a weights container.

    When ``expect`` is given the tensors must match that architecture exactly;
    otherwise the architecture is inferred from names and shapes.
    """
    tensors = segw.load_tensors(path)
    arch = _match_architecture(tensors, expect)
    for name, arr in tensors.items():
        if not np.all(np.isfinite(arr)):
            raise InvalidWeights(f"tensor {name} contains non-finite values")
    return NetworkWeights(tensors=tensors, architecture_id=arch)


def save_weights(path, weights: NetworkWeights) -> None:
    segw.save_tensors(path, weights.tensors)


def _encoder_forward(grid: np.ndarray, scale: np.ndarray, w: NetworkWeights) -> np.ndarray:
    t = w.tensor
    x = grid.astype(np.float64)[None, :, :, :]
    for i in (1, 2, 3):
        x = nnops.conv3d_same(x, t(f"conv{i}.weight"), t(f"conv{i}.bias"))
        x = nnops.batch_norm(x, t(f"bn{i}.gamma"), t(f"bn{i}.beta"),
                             t(f"bn{i}.mean"), t(f"bn{i}.var"))
        x = nnops.relu(x)
        if i < 3:
            x = nnops.max_pool2(x)
    feat = np.concatenate([x.reshape(-1), scale / SCALE_NORMALIZER_M])
    h = nnops.relu(nnops.dense(feat, t("fc1.weight"), t("fc1.bias")))
    return nnops.relu(nnops.dense(h, t("fc2.weight"), t("fc2.bias")))


def describe(vox: VoxelizedInput, weights: NetworkWeights) -> Descriptor:
    """Forward pass of the descriptor network over a voxelized segment."""
    if weights.architecture_id not in ENCODER_SPECS:
        raise WeightsFormatError(
            "unknown_architecture",
            f"describe needs an encoder, got {weights.architecture_id}")
    values = _encoder_forward(vox.grid, np.asarray(vox.original_extent, dtype=np.float64),
                              weights)
    return Descriptor(values=values, variant=weights.architecture_id)


def count_macs(architecture_id: str) -> int:
    """Multiply-accumulate count of one encoder forward pass (structural)."""
    spec = ENCODER_SPECS[architecture_id]
    f = (1,) + spec["filters"]
    dims = GRID_DIMS
    total = 0
    for i in range(3):
        total += dims[0] * dims[1] * dims[2] * 27 * f[i] * f[i + 1]
        if i < 2:
            dims = tuple(d // 2 for d in dims)
    flat = f[3] * dims[0] * dims[1] * dims[2]
    total += (flat + 3) * spec["fc"][0]
    total += spec["fc"][0] * spec["fc"][1]
    return total


# ---------------------------------------------------------------------------
# Handcrafted eigenvalue baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenvalueFeatures:
    """Seven covariance-shape features from normalized eigenvalues."""

    linearity: float
    planarity: float
    scattering: float
    omnivariance: float
    anisotropy: float
    eigenentropy: float
    change_of_curvature: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.linearity, self.planarity, self.scattering, self.omnivariance,
            self.anisotropy, self.eigenentropy, self.change_of_curvature,
        ])


def describe_eigenvalue(cloud) -> EigenvalueFeatures:
    """Eigenvalue shape features of a cloud (or anything with a .cloud)."""
    cloud = getattr(cloud, "cloud", cloud)
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.shape[0] < 3:
        raise DegenerateSegment("need at least 3 points for covariance features")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    lam, _ = eig_sym3(cov)
    lam = np.maximum(lam, 0.0)
    total = lam.sum()
    if total <= 0.0 or lam[0] <= 0.0:
        raise DegenerateSegment("all points collocated")
    e = lam / total
    ent = -sum(v * np.log(v) for v in e if v > 0.0)
    return EigenvalueFeatures(
        linearity=(e[0] - e[1]) / e[0],
        planarity=(e[1] - e[2]) / e[0],
        scattering=e[2] / e[0],
        omnivariance=float(np.cbrt(e[0] * e[1] * e[2])),
        anisotropy=(e[0] - e[2]) / e[0],
        eigenentropy=float(ent),
        change_of_curvature=float(e[2]),
    )
