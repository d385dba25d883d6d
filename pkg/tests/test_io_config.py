import json
import struct

import numpy as np
import pytest

from segloc.config import PipelineConfig, config_from_dict, load_config
from segloc.errors import ConfigError, PoseFormatError, ScanFormatError
from segloc.geometry import SE3, PointCloud, so3_exp
from segloc.io_formats import read_poses, read_scan, write_poses, write_scan


class TestReadScan:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.xyz"
        p.write_text("")
        assert read_scan(p, "xyz-text").is_empty
        b = tmp_path / "empty.bin"
        b.write_bytes(b"")
        assert read_scan(b, "velodyne-bin").is_empty

    def test_xyz_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.normal(size=(50, 3)))
        p = tmp_path / "c.xyz"
        write_scan(p, cloud)
        back = read_scan(p, "xyz-text")
        assert np.allclose(back.points, cloud.points, atol=1e-7)

    def test_xyz_malformed_line(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("1 2 3\n4 5\n")
        with pytest.raises(ScanFormatError) as ei:
            read_scan(p, "xyz-text")
        assert ei.value.line == 2

    def test_bin_single_record(self, tmp_path):
        p = tmp_path / "one.bin"
        p.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
        cloud = read_scan(p, "velodyne-bin")
        assert np.allclose(cloud.points, [[1, 2, 3]])

    def test_bin_truncated(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"\x00" * 17)
        with pytest.raises(ScanFormatError):
            read_scan(p, "velodyne-bin")

    def test_bin_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.normal(size=(64, 3)))
        p = tmp_path / "c.bin"
        write_scan(p, cloud, "velodyne-bin")
        back = read_scan(p, "velodyne-bin")
        assert np.allclose(back.points, cloud.points, atol=1e-6)


class TestReadPoses:
    def test_identity_line(self, tmp_path):
        p = tmp_path / "poses.txt"
        p.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
        poses = read_poses(p)
        assert len(poses) == 1
        assert np.allclose(poses[0].matrix(), np.eye(4))

    def test_wrong_token_count(self, tmp_path):
        p = tmp_path / "poses.txt"
        p.write_text("1 0 0 0 0 1 0 0 0 0 1\n")
        with pytest.raises(PoseFormatError) as ei:
            read_poses(p)
        assert ei.value.line == 1

    def test_round_trip(self, tmp_path, rng):
        poses = []
        for _ in range(10):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            poses.append(SE3(so3_exp(axis * rng.uniform(-3, 3)),
                             rng.uniform(-100, 100, size=3)))
        p = tmp_path / "poses.txt"
        write_poses(p, poses)
        back = read_poses(p)
        for a, b in zip(poses, back):
            assert np.allclose(a.matrix(), b.matrix(), atol=1e-9)

    def test_reorthonormalization_flagged(self, tmp_path):
        p = tmp_path / "poses.txt"
        p.write_text("1.001 0 0 0 0 1 0 0 0 0 1 0\n")
        with pytest.warns(UserWarning):
            poses = read_poses(p)
        R = poses[0].rotation
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-9)


class TestConfig:
    def test_defaults_validate(self):
        PipelineConfig().validate()

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"no_such_section": {}})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"voxel_map": {"voxel_sz": 0.1}})

    def test_out_of_range_value(self):
        with pytest.raises(ConfigError):
            config_from_dict({"voxel_map": {"voxel_size": -1.0}})
        with pytest.raises(ConfigError):
            config_from_dict({"retrieval": {"min_inliers": 1}})
        with pytest.raises(ConfigError):
            config_from_dict({"segmenter": {"method": "magic"}})

    def test_round_trip_file(self, tmp_path):
        data = {
            "seed": 7,
            "voxel_map": {"voxel_size": 0.2, "local_radius": 30.0},
            "retrieval": {"k_neighbors": 8, "min_inliers": 4},
            "streams": [{"robot_id": 0, "scans": ["a.xyz"], "format": "xyz-text"}],
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(data))
        cfg = load_config(p)
        assert cfg.seed == 7
        assert cfg.voxel_map.voxel_size == 0.2
        assert cfg.retrieval.k_neighbors == 8
        assert cfg.streams[0].scans == ("a.xyz",)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_drop_classes_validated(self):
        with pytest.raises(ConfigError):
            config_from_dict({"retrieval": {"drop_classes": ["dragon"]}})
        cfg = config_from_dict({"retrieval": {"drop_classes": ["vehicle"]}})
        assert cfg.retrieval.drop_classes == ("vehicle",)
