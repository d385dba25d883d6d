"""File-level evaluation modes backing the `eval` CLI subcommand.

Every mode is deterministic given the config seed and writes CSV/JSON
artifacts with fixed key names.
"""

from __future__ import annotations

import csv
import json
import os
import re

import numpy as np

from . import segw
from .config import PipelineConfig
from .errors import SeglocError
from .evaluation import (
    GroundTruthParams,
    build_roc,
    compression_stats,
    generate_gt,
    knn_needed_curve,
)
from .io_formats import read_scan
from .localization import SegmentMap


def _segment_id_from_name(path) -> int:
    m = re.search(r"(\d+)\D*$", os.path.basename(path))
    if not m:
        raise SeglocError(f"cannot parse a segment id from file name {path!r}")
    return int(m.group(1))


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def run_gt_gen(segment_files, config: PipelineConfig, out_csv) -> list:
    """Hull-overlap ground-truth pairs over map-frame segment files."""
    params = GroundTruthParams(
        overlap_p=config.evaluation.overlap_p,
        max_centroid_distance=config.evaluation.max_centroid_distance)
    segments = [(_segment_id_from_name(p), read_scan(p, "xyz-text"))
                for p in sorted(segment_files)]
    pairs = generate_gt(segments, params)
    with open(out_csv, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["id_a", "id_b", "overlap"])
        for a, b, o in pairs:
            w.writerow([a, b, f"{o:.9g}"])
    return pairs


def run_roc(map_path, gt_pairs_csv, config: PipelineConfig, out_csv, out_json) -> float:
    """ROC over descriptor distance with seeded negative sampling."""
    seg_map = SegmentMap.load(map_path)
    with open(gt_pairs_csv, newline="", encoding="ascii") as f:
        rows = list(csv.DictReader(f))
    positives = []
    for row in rows:
        a = seg_map.get(int(row["id_a"]))
        b = seg_map.get(int(row["id_b"]))
        if a is not None and b is not None:
            positives.append((a.descriptor, b.descriptor))
    if not positives:
        raise SeglocError("no ground-truth pair is present in the map")
    entries = seg_map.entries()
    centroids = np.array([e.centroid for e in entries])
    rng = np.random.default_rng(config.seed)
    negatives = []
    min_d = config.evaluation.negative_min_distance
    per_pos = config.evaluation.negatives_per_positive
    for _ in positives:
        made = 0
        guard = 0
        while made < per_pos and guard < per_pos * 50:
            guard += 1
            i, j = rng.integers(0, len(entries), size=2)
            if i == j:
                continue
            if np.linalg.norm(centroids[i] - centroids[j]) <= min_d:
                continue
            negatives.append((entries[i].descriptor, entries[j].descriptor))
            made += 1
        if made < per_pos:
            raise SeglocError("map too small to sample far-apart negative pairs")
    roc = build_roc(positives, negatives)
    with open(out_csv, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["fpr", "tpr"])
        for fpr, tpr in roc.points:
            w.writerow([f"{fpr:.9g}", f"{tpr:.9g}"])
    _write_json(out_json, {"auc": roc.auc, "positives": len(positives),
                           "negatives": len(negatives)})
    return roc.auc


def run_knn_curve(map_path, observations_path, config: PipelineConfig,
                  out_csv, out_json) -> None:
    """Median neighbours needed per completeness bin.

    The observations container holds tensors "descriptors" (N, D), "targets"
    (N,) and "completeness" (N,).
    """
    seg_map = SegmentMap.load(map_path)
    t = segw.load_tensors(observations_path)
    for name in ("descriptors", "targets", "completeness"):
        if name not in t:
            raise SeglocError(f"observations container is missing tensor {name!r}")
    obs = [(t["descriptors"][i].astype(np.float64), int(t["targets"][i]),
            float(t["completeness"][i])) for i in range(t["targets"].shape[0])]
    curve, skipped = knn_needed_curve(obs, seg_map, bins=config.evaluation.completeness_bins)
    with open(out_csv, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["bin_lo", "bin_hi", "median_k", "count"])
        for lo, hi, median, count in curve:
            w.writerow([f"{lo:.9g}", f"{hi:.9g}",
                        "" if median is None else f"{median:.9g}", count])
    _write_json(out_json, {"skipped": skipped,
                           "total": len(obs)})


def run_recon_table(grid_files, config: PipelineConfig, out_json,
                    base_dir=".") -> float:
    """Mean one-voxel correspondence ratio of decoded reconstructions."""
    from .descriptor import describe, load_weights
    from .preprocess import load_voxelized_input
    from .reconstruction import correspondence_ratio, decode
    dcfg = config.descriptor
    if dcfg.weights is None or dcfg.decoder_weights is None:
        raise SeglocError("recon-table needs descriptor.weights and descriptor.decoder_weights")
    enc = load_weights(_resolve(dcfg.weights, base_dir), expect=dcfg.variant)
    dec = load_weights(_resolve(dcfg.decoder_weights, base_dir), expect="decoder-v1")
    ratios = {}
    for path in sorted(grid_files):
        vox = load_voxelized_input(path)
        d = describe(vox, enc)
        recon = decode(d, dec, voxel_sides=vox.voxel_sides)
        ratios[os.path.basename(path)] = correspondence_ratio(vox, recon)
    mean = float(np.mean(list(ratios.values()))) if ratios else 0.0
    _write_json(out_json, {"mean_ratio": mean, "per_grid": ratios})
    return mean


def run_compression(map_path, out_json, raw_point_count=None) -> dict:
    seg_map = SegmentMap.load(map_path)
    stats = compression_stats(seg_map, raw_point_count=raw_point_count)
    payload = {
        "raw_bytes": stats.raw_bytes,
        "descriptor_bytes": stats.descriptor_bytes,
        "ratio": stats.ratio,
        "segment_count": stats.segment_count,
        "descriptor_dim": stats.descriptor_dim,
    }
    _write_json(out_json, payload)
    return payload


def _read_trajectory(path) -> dict:
    out = {}
    with open(path, encoding="ascii") as f:
        for line in f:
            tokens = line.split()
            if not tokens:
                continue
            robot, node = int(tokens[0]), int(tokens[1])
            vals = np.array([float(v) for v in tokens[2:]]).reshape(3, 4)
            out[(robot, node)] = vals[:, 3]
    return out


def run_loc_cdf(estimated_trajectory, gt_trajectory, out_csv) -> np.ndarray:
    """Position-error CDF over all ground-truth nodes; missing estimates are
    failures and the curve saturates below one."""
    from .evaluation import localization_error_cdf
    est = _read_trajectory(estimated_trajectory)
    gt = _read_trajectory(gt_trajectory)
    keys = sorted(gt)
    estimates = [est.get(k) for k in keys]
    truths = [gt[k] for k in keys]
    cdf = localization_error_cdf(estimates, truths)
    with open(out_csv, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["error_m", "cumulative_fraction"])
        for e, frac in cdf:
            w.writerow([f"{e:.9g}", f"{frac:.9g}"])
    return cdf


def _resolve(path, base_dir):
    return path if os.path.isabs(path) else os.path.join(base_dir, path)
