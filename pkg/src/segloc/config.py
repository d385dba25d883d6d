"""Pipeline configuration: one JSON document validated against a strict schema.

Unknown keys are rejected and every numeric value is range-checked at load
time, so a typo fails fast instead of silently running with a default. All
randomness in the pipeline (RANSAC, clique restarts, negative sampling)
derives from the single root seed here.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .io_formats import SCAN_FORMATS
from .segmentation import SegmenterParams


@dataclass(frozen=True)
class VoxelMapConfig:
    voxel_size: float = 0.1
    activation_threshold: int = 1
    local_radius: float = 50.0
    cylindrical: bool = True
    max_cells: int | None = None
    eviction_radius_factor: float | None = None  # evict beyond factor * local_radius

    def validate(self):
        if self.voxel_size <= 0:
            raise ConfigError("voxel_map.voxel_size must be positive")
        if self.activation_threshold < 1:
            raise ConfigError("voxel_map.activation_threshold must be >= 1")
        if self.local_radius <= 0:
            raise ConfigError("voxel_map.local_radius must be positive")
        if self.max_cells is not None and self.max_cells < 1:
            raise ConfigError("voxel_map.max_cells must be >= 1 when set")
        if self.eviction_radius_factor is not None and self.eviction_radius_factor < 1.0:
            raise ConfigError("voxel_map.eviction_radius_factor must be >= 1")


@dataclass(frozen=True)
class SegmenterConfig:
    method: str = "euclidean"
    euclidean_distance_threshold: float = 0.2
    min_segment_points: int = 100
    max_segment_points: int = 15000
    normal_neighborhood_k: int = 20
    smoothness_angle_threshold_deg: float = 10.0
    curvature_seed_threshold: float = 0.05
    ground_inlier_threshold: float = 0.2
    max_ground_tilt_deg: float = 30.0
    ransac_iterations: int = 100
    inactivity_horizon: int = 3

    def validate(self):
        if self.method not in ("euclidean", "smoothness"):
            raise ConfigError(f"segmenter.method {self.method!r} unknown")
        if self.inactivity_horizon < 1:
            raise ConfigError("segmenter.inactivity_horizon must be >= 1")
        try:
            self.to_params()
        except ValueError as e:
            raise ConfigError(f"segmenter: {e}") from e

    def to_params(self) -> SegmenterParams:
        return SegmenterParams(
            euclidean_distance_threshold=self.euclidean_distance_threshold,
            min_segment_points=self.min_segment_points,
            max_segment_points=self.max_segment_points,
            normal_neighborhood_k=self.normal_neighborhood_k,
            smoothness_angle_threshold_deg=self.smoothness_angle_threshold_deg,
            curvature_seed_threshold=self.curvature_seed_threshold,
            ground_inlier_threshold=self.ground_inlier_threshold,
            max_ground_tilt_deg=self.max_ground_tilt_deg,
            ransac_iterations=self.ransac_iterations,
        )


@dataclass(frozen=True)
class DescriptorConfig:
    backend: str = "network"       # "network" | "eigenvalue"
    variant: str = "segmap-v1"
    weights: str | None = None
    decoder_weights: str | None = None
    semantics_weights: str | None = None

    def validate(self):
        if self.backend not in ("network", "eigenvalue"):
            raise ConfigError(f"descriptor.backend {self.backend!r} unknown")
        if self.backend == "network" and self.variant not in ("segmap-v1", "segmini-v1"):
            raise ConfigError(f"descriptor.variant {self.variant!r} unknown")


@dataclass(frozen=True)
class RetrievalConfig:
    k_neighbors: int = 64
    consistency_epsilon: float = 0.4
    min_inliers: int = 7
    drop_classes: tuple = ()
    loop_min_node_gap: int = 20
    local_window_factor: float = 2.0  # local map spans factor * local_radius

    def validate(self):
        if self.k_neighbors < 1:
            raise ConfigError("retrieval.k_neighbors must be >= 1")
        if self.local_window_factor < 1.0:
            raise ConfigError("retrieval.local_window_factor must be >= 1")
        if self.consistency_epsilon <= 0:
            raise ConfigError("retrieval.consistency_epsilon must be positive")
        if self.min_inliers < 3:
            raise ConfigError("retrieval.min_inliers must be >= 3")
        valid = {"vehicle", "building", "other"}
        for c in self.drop_classes:
            if str(c).lower() not in valid:
                raise ConfigError(f"retrieval.drop_classes entry {c!r} unknown")
        if self.loop_min_node_gap < 0:
            raise ConfigError("retrieval.loop_min_node_gap must be >= 0")


@dataclass(frozen=True)
class PoseGraphConfig:
    translation_sigma: float = 0.1
    rotation_sigma: float = 0.02
    odometry_translation_sigma: float = 0.05
    odometry_rotation_sigma: float = 0.01
    huber_delta: float = 1.0
    max_iters: int = 100
    tol: float = 1e-9

    def validate(self):
        for name in ("translation_sigma", "rotation_sigma", "huber_delta",
                     "odometry_translation_sigma", "odometry_rotation_sigma", "tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"pose_graph.{name} must be positive")
        if self.max_iters < 1:
            raise ConfigError("pose_graph.max_iters must be >= 1")


@dataclass(frozen=True)
class EvaluationConfig:
    overlap_p: float = 0.3
    max_centroid_distance: float = 3.0
    negatives_per_positive: int = 1000
    negative_min_distance: float = 20.0
    completeness_bins: int = 10

    def validate(self):
        if not 0 < self.overlap_p <= 1:
            raise ConfigError("evaluation.overlap_p must be in (0, 1]")
        if self.max_centroid_distance <= 0:
            raise ConfigError("evaluation.max_centroid_distance must be positive")
        if self.negatives_per_positive < 1:
            raise ConfigError("evaluation.negatives_per_positive must be >= 1")
        if self.negative_min_distance <= 0:
            raise ConfigError("evaluation.negative_min_distance must be positive")
        if self.completeness_bins < 1:
            raise ConfigError("evaluation.completeness_bins must be >= 1")


@dataclass(frozen=True)
class StreamConfig:
    robot_id: int
    scans: tuple
    poses: str | None = None
    format: str = "xyz-text"

    def validate(self):
        if self.format not in SCAN_FORMATS:
            raise ConfigError(f"stream.format {self.format!r} unknown")
        if not isinstance(self.robot_id, int) or self.robot_id < 0:
            raise ConfigError("stream.robot_id must be a non-negative integer")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scan_period_s: float = 0.1
    voxel_map: VoxelMapConfig = field(default_factory=VoxelMapConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    pose_graph: PoseGraphConfig = field(default_factory=PoseGraphConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    streams: tuple = ()

    def validate(self):
        if self.scan_period_s <= 0:
            raise ConfigError("scan_period_s must be positive")
        for section in (self.voxel_map, self.segmenter, self.descriptor,
                        self.retrieval, self.pose_graph, self.evaluation):
            section.validate()
        for s in self.streams:
            s.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["streams"] = [asdict(s) for s in self.streams]
        return d


_SECTIONS = {
    "voxel_map": VoxelMapConfig,
    "segmenter": SegmenterConfig,
    "descriptor": DescriptorConfig,
    "retrieval": RetrievalConfig,
    "pose_graph": PoseGraphConfig,
    "evaluation": EvaluationConfig,
}


def _build(cls, data: dict, context: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {context}")
    coerced = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**coerced)
    except TypeError as e:
        raise ConfigError(f"{context}: {e}") from e


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    allowed = set(PipelineConfig.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    if "streams" in data:
        kwargs["streams"] = tuple(_build(StreamConfig, s, f"streams[{i}]")
                                  for i, s in enumerate(data["streams"]))
    for scalar in ("seed", "scan_period_s"):
        if scalar in data:
            kwargs[scalar] = data[scalar]
    cfg = PipelineConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from e
    return config_from_dict(data)
