"""End-to-end orchestration: accumulate, segment, describe, localize, solve.

A deterministic round-robin dispatcher interleaves the robot streams, playing
the role of one worker per stream feeding a single-writer map and graph. Each
robot owns its voxel grid and segmenter; descriptors are upserted into the
shared segment map; successful localizations become loop-closure factors and
trigger re-optimization of the whole graph.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .descriptor import (
    DESCRIPTOR_DIM,
    NetworkWeights,
    describe,
    describe_eigenvalue,
    load_weights,
)
from .errors import DegenerateSegment, SeglocError
from .evaluation import compression_stats, descriptor_entry_bytes
from .geometry import SE3, PointCloud
from .localization import RetrievalParams, SegmentMap, localize
from .pose_graph import PoseGraph, export_trajectory, information_from_sigmas
from .preprocess import align, voxelize
from .segmentation import IncrementalSegmenter
from .semantics import SemanticClass, classify
from .voxel_map import DynamicVoxelGrid

SEGMENT_ID_STRIDE = 1_000_000  # namespaces per-robot segment ids in the shared map


@dataclass
class RobotStream:
    robot_id: int
    scans: list                      # list of PointCloud
    odometry: list                   # list of SE3 relative measurements (len = scans-1)
    start_pose: SE3 = field(default_factory=SE3.identity)


@dataclass
class LocalizationEvent:
    robot_id: int
    node_index: int
    target_robot: int
    target_node: int
    inliers: int
    residual_rms: float
    transform: SE3


@dataclass
class SlamResult:
    poses: dict
    segment_map: SegmentMap
    localizations: list
    stats: dict


class _DescriptorBackend:
    """Wraps the configured descriptor route (network weights or eigenvalue
    features) plus the optional semantics head."""

    def __init__(self, cfg, base_dir="."):
        self.cfg = cfg
        self.weights = None
        self.semantics = None
        if cfg.backend == "network":
            if cfg.weights is None:
                raise SeglocError("descriptor.backend 'network' requires descriptor.weights")
            self.weights = load_weights(os.path.join(base_dir, cfg.weights) if not
                                        os.path.isabs(cfg.weights) else cfg.weights,
                                        expect=cfg.variant)
        if cfg.semantics_weights:
            path = cfg.semantics_weights
            self.semantics = load_weights(path if os.path.isabs(path) else
                                          os.path.join(base_dir, path),
                                          expect="semantics-v1")

    @property
    def dim(self) -> int:
        return DESCRIPTOR_DIM[self.cfg.variant] if self.weights else 7

    def describe_observation(self, obs):
        if self.weights is not None:
            vox = voxelize(align(obs))
            d = describe(vox, self.weights)
        else:
            d = describe_eigenvalue(obs)
            from .descriptor import Descriptor
            d = Descriptor(values=d.as_array(), variant="eigen-v1")
        sem = SemanticClass.OTHER
        if self.semantics is not None and self.weights is not None:
            sem = classify(d, self.semantics).semantic_class
        return d, sem


class SlamRunner:
    def __init__(self, config: PipelineConfig, backend: _DescriptorBackend | None = None,
                 base_dir="."):
        config.validate()
        self.config = config
        self.backend = backend or _DescriptorBackend(config.descriptor, base_dir)
        self.map = SegmentMap(descriptor_dim=self.backend.dim)
        self.graph = PoseGraph(huber_delta=config.pose_graph.huber_delta)
        self.localizations: list[LocalizationEvent] = []
        self._per_robot: dict[int, dict] = {}
        self._described_sizes: dict[int, int] = {}
        self._entry_anchor: dict[int, tuple] = {}  # gid -> (robot, node, odom centroid)
        self._stats = {
            "scan_count": 0,
            "scan_points": 0,
            "segment_points_tx": 0,
            "descriptors_tx": 0,
        }

    # -- per-robot state ------------------------------------------------------

    def _robot_state(self, stream: RobotStream) -> dict:
        state = self._per_robot.get(stream.robot_id)
        if state is None:
            vm = self.config.voxel_map
            grid = DynamicVoxelGrid(voxel_size=vm.voxel_size,
                                    activation_threshold=vm.activation_threshold,
                                    cylindrical=vm.cylindrical, max_cells=vm.max_cells)
            seg = IncrementalSegmenter(grid, self.config.segmenter.to_params(),
                                       method=self.config.segmenter.method,
                                       seed=self.config.seed + stream.robot_id)
            state = {"grid": grid, "segmenter": seg, "odom": [stream.start_pose]}
            self._per_robot[stream.robot_id] = state
        return state

    def _estimate(self, robot_id: int, index: int) -> SE3:
        return self.graph.nodes[(robot_id, index)]

    # -- main loop --------------------------------------------------------------

    def run(self, streams: list[RobotStream]) -> SlamResult:
        if not streams:
            return self._finish()
        odo_info = information_from_sigmas(
            self.config.pose_graph.odometry_translation_sigma,
            self.config.pose_graph.odometry_rotation_sigma)
        for stream in streams:
            if stream.scans and (stream.robot_id, 0) not in self.graph.nodes:
                self.graph.add_node(stream.robot_id, 0, stream.start_pose)
        with_scans = [s.robot_id for s in streams if s.scans]
        if with_scans:
            anchored = min(with_scans)
            self.graph.add_prior((anchored, 0), self.graph.nodes[(anchored, 0)],
                                 information_from_sigmas(1e-3, 1e-3))
        longest = max((len(s.scans) for s in streams), default=0)
        for step in range(longest):
            for stream in streams:
                if step < len(stream.scans):
                    self._process_scan(stream, step, odo_info)
        if self.graph.factors:
            self.graph.optimize(max_iters=self.config.pose_graph.max_iters,
                                tol=self.config.pose_graph.tol, auto_anchor=True)
            self._refresh_map_centroids()
        return self._finish()

    def _process_scan(self, stream: RobotStream, index: int, odo_info) -> None:
        r = stream.robot_id
        state = self._robot_state(stream)
        if index > 0:
            z = stream.odometry[index - 1]
            prev = self._estimate(r, index - 1)
            self.graph.add_node(r, index, prev.compose(z))
            self.graph.add_odometry(r, index - 1, index, z, odo_info)
            state["odom"].append(state["odom"][-1].compose(z))
        # Perception runs in the robot's own dead-reckoned frame; graph
        # corrections only move map entries and factors, never the grid.
        odom_pose = state["odom"][index]
        cloud = stream.scans[index]
        self._stats["scan_count"] += 1
        self._stats["scan_points"] += len(cloud)

        grid: DynamicVoxelGrid = state["grid"]
        segmenter: IncrementalSegmenter = state["segmenter"]
        newly = grid.insert_scan(cloud, odom_pose)
        vm = self.config.voxel_map
        view = grid.extract_local(odom_pose.translation, vm.local_radius)
        update = segmenter.update(newly, view)
        completed = segmenter.mark_complete(self.config.segmenter.inactivity_horizon)
        if vm.eviction_radius_factor is not None:
            evicted = grid.evict_outside(odom_pose.translation,
                                         vm.eviction_radius_factor * vm.local_radius)
            segmenter.forget_cells(evicted)

        touched = sorted(set(update.created) | set(update.grown) | set(completed))
        self._describe_and_upsert(r, index, segmenter, touched, set(completed))
        for sid in completed:
            segmenter.retire(sid)
        self._try_localize(r, index, segmenter)

    REDESCRIBE_GROWTH = 1.2  # re-describe once a segment grew by 20%

    def _describe_and_upsert(self, r: int, index: int,
                             segmenter: IncrementalSegmenter, touched,
                             completed: set) -> int:
        described = 0
        for sid in touched:
            seg = segmenter.segments.get(sid)
            if seg is None or not segmenter.map_eligible(sid):
                continue
            obs = seg.latest()
            gid = r * SEGMENT_ID_STRIDE + sid
            last = self._described_sizes.get(gid)
            if last is not None and sid not in completed and \
                    len(obs.cloud) < self.REDESCRIBE_GROWTH * last:
                continue
            if last == len(obs.cloud):
                continue
            try:
                d, sem = self.backend.describe_observation(obs)
            except DegenerateSegment:
                continue
            self._described_sizes[gid] = len(obs.cloud)
            # Anchor the entry at the node where its latest observation was
            # taken (completion can lag growth by the inactivity horizon).
            anchor = min(obs.timestamp - 1, index)
            correction = self._estimate(r, anchor).compose(
                self._per_robot[r]["odom"][anchor].inverse())
            world_centroid = correction.apply(obs.centroid.reshape(1, 3))[0]
            self._entry_anchor[gid] = (r, anchor, obs.centroid.copy())
            self.map.upsert(gid, world_centroid, d, sem, point_count=len(obs.cloud),
                            robot_id=r, node_index=anchor)
            self._stats["segment_points_tx"] += len(obs.cloud)
            self._stats["descriptors_tx"] += 1
            described += 1
        return described

    def _refresh_map_centroids(self) -> None:
        """Re-project every entry through its anchor node's current estimate."""
        for gid, (r, node, odom_centroid) in self._entry_anchor.items():
            entry = self.map.get(gid)
            if entry is None:
                continue
            correction = self._estimate(r, node).compose(
                self._per_robot[r]["odom"][node].inverse())
            world = correction.apply(odom_centroid.reshape(1, 3))[0]
            if not np.allclose(world, entry.centroid, atol=1e-12):
                self.map.upsert(gid, world, entry.descriptor, entry.semantic_class,
                                point_count=entry.point_count, robot_id=entry.robot_id,
                                node_index=entry.node_index)

    def _local_segments(self, r: int, index: int, odom_pose: SE3):
        """The robot's current local map: its own entries refreshed within the
        loop node gap and near its position (judged in the odometry frame).

        The returned centroids are the corrected map-frame ones, so the
        localization transform expresses the residual correction.
        """
        out = []
        gap = self.config.retrieval.loop_min_node_gap
        radius = self.config.voxel_map.local_radius * \
            self.config.retrieval.local_window_factor
        for gid, (ar, _, odom_centroid) in self._entry_anchor.items():
            if ar != r:
                continue
            entry = self.map.get(gid)
            if entry is None or index - entry.node_index >= gap:
                continue
            if np.linalg.norm(odom_centroid[:2] - odom_pose.translation[:2]) > radius:
                continue
            out.append((gid, entry.centroid, entry.descriptor, entry.semantic_class))
        return sorted(out, key=lambda t: t[0])

    def _try_localize(self, r: int, index: int, segmenter) -> None:
        params = RetrievalParams(
            k_neighbors=self.config.retrieval.k_neighbors,
            consistency_epsilon=self.config.retrieval.consistency_epsilon,
            min_inliers=self.config.retrieval.min_inliers)
        odom_pose = self._per_robot[r]["odom"][index]
        local = self._local_segments(r, index, odom_pose)
        if len(local) < params.min_inliers:
            return
        gap = self.config.retrieval.loop_min_node_gap
        # Targets are everything the robot has not refreshed recently: the
        # local set and the target set partition its own entries by recency,
        # so a segment can never match itself or a concurrent sibling.
        exclude = {e.segment_id for e in self.map.entries()
                   if e.robot_id == r and index - e.node_index < gap}
        drop = {SemanticClass[c.upper()] for c in self.config.retrieval.drop_classes}
        result = localize(local, self.map, params, drop_classes=drop,
                          seed=self.config.seed + 31 * index + r,
                          exclude_global_ids=exclude)
        if result is None:
            return
        # Anchor the closure on the dominant target robot's median node.
        targets = [self.map.get(gid) for _, gid in result.inliers]
        robots = [e.robot_id for e in targets]
        target_robot = max(set(robots), key=robots.count)
        nodes = sorted(e.node_index for e in targets if e.robot_id == target_robot)
        target_node = nodes[len(nodes) // 2]
        if target_robot == r and abs(target_node - index) < gap:
            return
        t_i = self._estimate(target_robot, target_node)
        t_j = self._estimate(r, index)
        measurement = t_i.inverse().compose(result.transform).compose(t_j)
        self.graph.add_loop_closure((target_robot, target_node), (r, index), measurement,
                                    information_from_sigmas(
                                        self.config.pose_graph.translation_sigma,
                                        self.config.pose_graph.rotation_sigma))
        self.graph.optimize(max_iters=self.config.pose_graph.max_iters,
                            tol=self.config.pose_graph.tol, auto_anchor=True)
        self._refresh_map_centroids()
        self.localizations.append(LocalizationEvent(
            robot_id=r, node_index=index, target_robot=target_robot,
            target_node=target_node, inliers=len(result.inliers),
            residual_rms=result.residual_rms, transform=result.transform))

    # -- outputs ----------------------------------------------------------------

    def _finish(self) -> SlamResult:
        duration = max(self._stats["scan_count"] * self.config.scan_period_s, 1e-9)
        dim = self.map.descriptor_dim or 0
        entry_bytes = descriptor_entry_bytes(dim)
        comp = compression_stats(self.map, raw_point_count=self._stats["scan_points"]) \
            if len(self.map) else None
        robots = {r for r, _ in self.graph.nodes}
        stats = {
            "duration_s": self._stats["scan_count"] * self.config.scan_period_s,
            "number_of_robots": len(robots),
            "number_of_segmented_local_clouds": self._stats["scan_count"],
            "average_number_of_segments_per_cloud":
                (self._stats["descriptors_tx"] / self._stats["scan_count"])
                if self._stats["scan_count"] else 0.0,
            "bandwidth_local_clouds_kb_per_s":
                self._stats["scan_points"] * 12 / 1000.0 / duration,
            "bandwidth_segments_kb_per_s":
                self._stats["segment_points_tx"] * 12 / 1000.0 / duration,
            "bandwidth_descriptors_kb_per_s":
                self._stats["descriptors_tx"] * entry_bytes / 1000.0 / duration,
            "final_map_size_kb": len(self.map) * entry_bytes / 1000.0,
            "number_of_successful_localizations": len(self.localizations),
        }
        if comp is not None:
            stats["compression_ratio"] = comp.ratio
            stats["raw_map_bytes"] = comp.raw_bytes
            stats["descriptor_map_bytes"] = comp.descriptor_bytes
        return SlamResult(poses=dict(self.graph.nodes), segment_map=self.map,
                          localizations=list(self.localizations), stats=stats)


def _atomic_write(path, writer) -> None:
    tmp = f"{path}.tmp"
    writer(tmp)
    os.replace(tmp, path)


def write_slam_outputs(result: SlamResult, output_dir) -> dict:
    """Write trajectory, map, stats and localization log; returns the paths."""
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "trajectory": os.path.join(output_dir, "trajectory.txt"),
        "map": os.path.join(output_dir, "segment_map.segw"),
        "stats": os.path.join(output_dir, "stats.json"),
        "localizations": os.path.join(output_dir, "localizations.json"),
    }
    _atomic_write(paths["trajectory"], lambda p: export_trajectory(p, result.poses))
    if len(result.segment_map):
        _atomic_write(paths["map"], result.segment_map.save)
    _atomic_write(paths["stats"], lambda p: _write_json(p, result.stats))
    log = [{
        "robot_id": e.robot_id, "node_index": e.node_index,
        "target_robot": e.target_robot, "target_node": e.target_node,
        "inliers": e.inliers, "residual_rms": e.residual_rms,
        "rotation": e.transform.rotation.reshape(-1).tolist(),
        "translation": e.transform.translation.tolist(),
    } for e in result.localizations]
    _atomic_write(paths["localizations"], lambda p: _write_json(p, log))
    return paths


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def streams_from_config(config: PipelineConfig, base_dir=".") -> list[RobotStream]:
    """Materialize scan streams from config file lists."""
    from .io_formats import read_poses, read_scan
    streams = []
    for sc in config.streams:
        scans = [read_scan(p if os.path.isabs(p) else os.path.join(base_dir, p), sc.format)
                 for p in sc.scans]
        if sc.poses:
            pose_path = sc.poses if os.path.isabs(sc.poses) else os.path.join(base_dir, sc.poses)
            poses = read_poses(pose_path)
            if len(poses) != len(scans):
                raise SeglocError(
                    f"stream {sc.robot_id}: {len(scans)} scans but {len(poses)} poses")
            odometry = [poses[i].inverse().compose(poses[i + 1])
                        for i in range(len(poses) - 1)]
            start = poses[0] if poses else SE3.identity()
        else:
            odometry = [SE3.identity()] * max(0, len(scans) - 1)
            start = SE3.identity()
        streams.append(RobotStream(robot_id=sc.robot_id, scans=scans,
                                   odometry=odometry, start_pose=start))
    return streams


def run_slam(config: PipelineConfig, streams: list[RobotStream] | None = None,
             output_dir=None, base_dir=".") -> SlamResult:
    """Full pipeline; when streams is None they are loaded from the config."""
    if streams is None:
        streams = streams_from_config(config, base_dir)
    runner = SlamRunner(config, base_dir=base_dir)
    result = runner.run(streams)
    if output_dir is not None:
        write_slam_outputs(result, output_dir)
    return result
