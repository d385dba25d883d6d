import struct
import zlib

import numpy as np
import pytest

from segloc import segw
from segloc.errors import WeightsFormatError


def test_round_trip_values(tmp_path):
    path = tmp_path / "t.segw"
    tensors = {
        "a.weight": np.arange(24, dtype=np.float32).reshape(2, 3, 4),
        "b": np.float32([1.5, -2.25]),
    }
    segw.save_tensors(path, tensors)
    back = segw.load_tensors(path)
    assert list(back) == ["a.weight", "b"]
    for k in tensors:
        assert back[k].dtype == np.float32
        assert np.array_equal(back[k], tensors[k])


def test_save_load_save_byte_exact(tmp_path):
    p1, p2 = tmp_path / "one.segw", tmp_path / "two.segw"
    rng = np.random.default_rng(0)
    segw.save_tensors(p1, {"x": rng.normal(size=(5, 7)).astype(np.float32),
                           "y": rng.normal(size=3).astype(np.float32)})
    segw.save_tensors(p2, segw.load_tensors(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_known_constants_exact(tmp_path):
    # Generator writes known constants; loader must return them bit-exactly.
    path = tmp_path / "c.segw"
    vals = np.float32([0.1, 1.0 / 3.0, -7.25e-3])
    segw.save_tensors(path, {"c": vals})
    got = segw.load_tensors(path)["c"]
    assert got.tobytes() == vals.tobytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.segw"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(WeightsFormatError) as ei:
        segw.load_tensors(path)
    assert ei.value.code == "bad_magic"


def test_bad_version(tmp_path):
    path = tmp_path / "v.segw"
    body = b"SEGW" + struct.pack("<HH", 9, 0)
    body += struct.pack("<I", zlib.crc32(body))
    path.write_bytes(body)
    with pytest.raises(WeightsFormatError) as ei:
        segw.load_tensors(path)
    assert ei.value.code == "bad_version"


def test_bad_checksum(tmp_path):
    path = tmp_path / "crc.segw"
    segw.save_tensors(path, {"x": np.zeros(4, dtype=np.float32)})
    raw = bytearray(path.read_bytes())
    raw[-6] ^= 0xFF  # corrupt a data byte, keep the stored CRC
    path.write_bytes(bytes(raw))
    with pytest.raises(WeightsFormatError) as ei:
        segw.load_tensors(path)
    assert ei.value.code == "bad_checksum"


def test_truncated(tmp_path):
    path = tmp_path / "t.segw"
    path.write_bytes(b"SEGW\x01\x00")
    with pytest.raises(WeightsFormatError) as ei:
        segw.load_tensors(path)
    assert ei.value.code == "truncated"


def test_empty_container_ok(tmp_path):
    path = tmp_path / "empty.segw"
    segw.save_tensors(path, {})
    assert segw.load_tensors(path) == {}
