"""Command-line interface.

Subcommands: segment, describe, build-map, localize, slam, reconstruct, eval,
gt-gen, stats. Global flags: --config, --seed (overrides the config seed),
--output-dir. All artifacts are deterministic given config + seed + inputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import evalmodes
from .config import PipelineConfig, load_config
from .errors import SeglocError
from .geometry import PointCloud, centroid
from .io_formats import read_scan, write_scan
from .localization import RetrievalParams, SegmentMap, localize
from .pipeline import SlamRunner, _DescriptorBackend, streams_from_config, write_slam_outputs
from .preprocess import align, save_voxelized_input, voxelize
from .semantics import SemanticClass


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    cfg.validate()
    return cfg


def _out_dir(args) -> str:
    os.makedirs(args.output_dir, exist_ok=True)
    return args.output_dir


def cmd_segment(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    streams = streams_from_config(cfg, base_dir=args.base_dir)
    runner = SlamRunner(cfg, backend=_NullBackend(), base_dir=args.base_dir)
    runner.run(streams)
    written = []
    for robot_id, state in sorted(runner._per_robot.items()):
        seg = state["segmenter"]
        for sid in sorted(seg.segments):
            if not seg.map_eligible(sid):
                continue
            obs = seg.segments[sid].latest()
            path = os.path.join(out, f"segment_{robot_id}_{sid}.xyz")
            write_scan(path, obs.cloud)
            written.append({"robot_id": robot_id, "segment_id": sid,
                            "points": len(obs.cloud), "file": os.path.basename(path)})
    with open(os.path.join(out, "segments.json"), "w", encoding="utf-8") as f:
        json.dump({"segments": written}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(written)} segments to {out}")
    return 0


class _NullBackend:
    """Backend stub for segmentation-only runs: no descriptors, no retrieval."""

    dim = 1

    def describe_observation(self, obs):
        raise SeglocError("segmentation-only run should not describe")


def cmd_describe(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    backend = _DescriptorBackend(cfg.descriptor, base_dir=args.base_dir)
    rows = []
    grids_dir = None
    if args.save_grids:
        grids_dir = os.path.join(out, "grids")
        os.makedirs(grids_dir, exist_ok=True)
    for path in args.inputs:
        if args.from_grids:
            from .descriptor import describe
            from .preprocess import load_voxelized_input
            vox = load_voxelized_input(path)
            d = describe(vox, backend.weights)
        else:
            cloud = read_scan(path, args.format)
            obs = _Obs(cloud)
            if grids_dir is not None:
                vox = voxelize(align(obs))
                save_voxelized_input(
                    os.path.join(grids_dir, os.path.basename(path) + ".segw"), vox)
            d, _ = backend.describe_observation(obs)
        rows.append((os.path.basename(path), d.values))
    csv_path = os.path.join(out, "descriptors.csv")
    with open(csv_path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        dim = len(rows[0][1]) if rows else 0
        w.writerow(["input"] + [f"v{i}" for i in range(dim)])
        for name, values in rows:
            w.writerow([name] + [f"{v:.9g}" for v in values])
    print(f"wrote {csv_path} ({len(rows)} descriptors)")
    return 0


class _Obs:
    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self.centroid = centroid(cloud) if len(cloud) else np.zeros(3)


def cmd_build_map(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    backend = _DescriptorBackend(cfg.descriptor, base_dir=args.base_dir)
    seg_map = SegmentMap(descriptor_dim=backend.dim)
    for path in args.inputs:
        cloud = read_scan(path, args.format)
        if not len(cloud):
            continue
        obs = _Obs(cloud)
        d, sem = backend.describe_observation(obs)
        seg_id = evalmodes._segment_id_from_name(path)
        seg_map.upsert(seg_id, obs.centroid, d, sem, point_count=len(cloud))
    map_path = os.path.join(out, "segment_map.segw")
    seg_map.save(map_path)
    print(f"wrote {map_path} ({len(seg_map)} segments)")
    return 0


def cmd_localize(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    backend = _DescriptorBackend(cfg.descriptor, base_dir=args.base_dir)
    seg_map = SegmentMap.load(args.map)
    local = []
    for path in args.inputs:
        cloud = read_scan(path, args.format)
        if not len(cloud):
            continue
        obs = _Obs(cloud)
        d, sem = backend.describe_observation(obs)
        local.append((evalmodes._segment_id_from_name(path) + 10_000_000,
                      obs.centroid, d.values, sem))
    params = RetrievalParams(k_neighbors=cfg.retrieval.k_neighbors,
                             consistency_epsilon=cfg.retrieval.consistency_epsilon,
                             min_inliers=cfg.retrieval.min_inliers)
    drop = {SemanticClass[c.upper()] for c in cfg.retrieval.drop_classes}
    result = localize(local, seg_map, params, drop_classes=drop, seed=cfg.seed)
    payload = {"localized": result is not None}
    if result is not None:
        payload.update({
            "rotation": result.transform.rotation.reshape(-1).tolist(),
            "translation": result.transform.translation.tolist(),
            "inliers": [list(p) for p in result.inliers],
            "residual_rms": result.residual_rms,
        })
    path = os.path.join(out, "localization.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {path} (localized={payload['localized']})")
    return 0


def cmd_slam(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    streams = streams_from_config(cfg, base_dir=args.base_dir)
    if not any(s.scans for s in streams):
        print("warning: no scans in any stream; writing empty outputs")
    runner = SlamRunner(cfg, base_dir=args.base_dir)
    result = runner.run(streams)
    paths = write_slam_outputs(result, out)
    print(f"slam: {result.stats['number_of_successful_localizations']} localizations, "
          f"{len(result.segment_map)} map segments; outputs in {out}")
    for name, p in sorted(paths.items()):
        print(f"  {name}: {p}")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    from .descriptor import load_weights
    from .reconstruction import decode, marching_cubes, save_grid, write_obj
    if cfg.descriptor.decoder_weights is None:
        raise SeglocError("reconstruct needs descriptor.decoder_weights in the config")
    dec = load_weights(evalmodes._resolve(cfg.descriptor.decoder_weights, args.base_dir),
                       expect="decoder-v1")
    seg_map = SegmentMap.load(args.map)
    count = 0
    for e in seg_map.entries():
        grid = decode(e.descriptor, dec)
        if args.emit_grids:
            save_grid(os.path.join(out, f"segment_{e.segment_id}_occupancy.segw"), grid)
        mesh = marching_cubes(grid, iso=args.iso)
        write_obj(os.path.join(out, f"segment_{e.segment_id}.obj"), mesh)
        count += 1
    print(f"reconstructed {count} segments into {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    mode = args.mode
    if mode == "gt-gen":
        pairs = evalmodes.run_gt_gen(args.inputs, cfg, os.path.join(out, "gt_pairs.csv"))
        print(f"gt-gen: {len(pairs)} pairs")
    elif mode == "roc":
        auc = evalmodes.run_roc(args.map, args.gt_pairs, cfg,
                                os.path.join(out, "roc.csv"),
                                os.path.join(out, "roc.json"))
        print(f"roc: auc={auc:.4f}")
    elif mode == "knn-curve":
        evalmodes.run_knn_curve(args.map, args.observations, cfg,
                                os.path.join(out, "knn_curve.csv"),
                                os.path.join(out, "knn_curve.json"))
        print("knn-curve written")
    elif mode == "recon-table":
        mean = evalmodes.run_recon_table(args.inputs, cfg,
                                         os.path.join(out, "recon_table.json"),
                                         base_dir=args.base_dir)
        print(f"recon-table: mean_ratio={mean:.4f}")
    elif mode == "compression":
        payload = evalmodes.run_compression(args.map, os.path.join(out, "compression.json"),
                                            raw_point_count=args.raw_points)
        print(f"compression: ratio={payload['ratio']:.2f}")
    elif mode == "loc-cdf":
        evalmodes.run_loc_cdf(args.estimated, args.ground_truth,
                              os.path.join(out, "loc_cdf.csv"))
        print("loc-cdf written")
    else:
        raise SeglocError(f"unknown eval mode {mode!r}")
    return 0


def cmd_gt_gen(args) -> int:
    args.mode = "gt-gen"
    return cmd_eval(args)


def cmd_stats(args) -> int:
    out = _out_dir(args)
    payload = evalmodes.run_compression(args.map, os.path.join(out, "compression.json"),
                                        raw_point_count=args.raw_points)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="segloc",
                                description="Segment-based LiDAR mapping and localization")
    p.add_argument("--config", help="pipeline configuration JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output-dir", default="out", help="artifact directory")
    p.add_argument("--base-dir", default=".", help="base for relative paths in the config")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("segment", help="accumulate scans and emit segments")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("describe", help="descriptors for segment files or grids")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--format", default="xyz-text")
    sp.add_argument("--from-grids", action="store_true",
                    help="inputs are voxelized-input containers")
    sp.add_argument("--save-grids", action="store_true",
                    help="also write the voxelized grids")
    sp.set_defaults(func=cmd_describe)

    sp = sub.add_parser("build-map", help="build a segment map from segment files")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--format", default="xyz-text")
    sp.set_defaults(func=cmd_build_map)

    sp = sub.add_parser("localize", help="localize local segments against a map")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--map", required=True)
    sp.add_argument("--format", default="xyz-text")
    sp.set_defaults(func=cmd_localize)

    sp = sub.add_parser("slam", help="full multi-robot pipeline from config streams")
    sp.set_defaults(func=cmd_slam)

    sp = sub.add_parser("reconstruct", help="decode map descriptors into meshes")
    sp.add_argument("--map", required=True)
    sp.add_argument("--iso", type=float, default=0.5)
    sp.add_argument("--emit-grids", action="store_true")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("eval", help="evaluation modes")
    sp.add_argument("--mode", required=True,
                    choices=["roc", "knn-curve", "recon-table", "compression",
                             "loc-cdf", "gt-gen"])
    sp.add_argument("inputs", nargs="*")
    sp.add_argument("--map")
    sp.add_argument("--gt-pairs")
    sp.add_argument("--observations")
    sp.add_argument("--estimated")
    sp.add_argument("--ground-truth")
    sp.add_argument("--raw-points", type=int, default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gt-gen", help="ground-truth correspondence pairs")
    sp.add_argument("inputs", nargs="+")
    sp.set_defaults(func=cmd_gt_gen)

    sp = sub.add_parser("stats", help="compression statistics of a map")
    sp.add_argument("--map", required=True)
    sp.add_argument("--raw-points", type=int, default=None)
    sp.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SeglocError as e:
        print(f"error [{args.command}]: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
