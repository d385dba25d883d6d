"""SEGW binary container: named float32 tensors with a CRC-32 trailer.

Layout (all little-endian):
    magic  "SEGW"
    u16    version (= 1)
    u16    tensor count
    per tensor:
        u16   name length, then UTF-8 name bytes
        u8    rank
        u32 x rank dims
        float32[prod(dims)] row-major data
    u32    CRC-32 over every preceding byte

The container doubles as the on-disk format for network weights, serialized
segment maps, and exported occupancy grids. Tensor order is preserved so that
save(load(f)) reproduces f byte for byte.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import WeightsFormatError

MAGIC = b"SEGW"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors, in dict order, as float32."""
    body = bytearray()
    body += MAGIC
    body += struct.pack("<HH", VERSION, len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor rank too large: {arr.ndim}")
        body += struct.pack("<H", len(name_b)) + name_b
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(body))


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read a container back into an ordered name -> float32 array dict."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise WeightsFormatError("truncated", f"file is only {len(raw)} bytes")
    if raw[:4] != MAGIC:
        raise WeightsFormatError("bad_magic", f"expected {MAGIC!r}, got {raw[:4]!r}")
    version, count = struct.unpack_from("<HH", raw, 4)
    if version != VERSION:
        raise WeightsFormatError("bad_version", f"unsupported version {version}")
    stored_crc = struct.unpack_from("<I", raw, len(raw) - 4)[0]
    actual_crc = zlib.crc32(raw[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise WeightsFormatError(
            "bad_checksum", f"stored {stored_crc:#010x}, computed {actual_crc:#010x}")

    tensors: dict[str, np.ndarray] = {}
    off = 8
    end = len(raw) - 4
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            nbytes = 4 * n
            if off + nbytes > end:
                raise struct.error("data runs past end")
            data = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(dims)
            off += nbytes
        except (struct.error, UnicodeDecodeError) as e:
            raise WeightsFormatError("truncated", f"tensor table corrupt: {e}") from e
        tensors[name] = data.copy()
    if off != end:
        raise WeightsFormatError("truncated", "trailing bytes after last tensor")
    return tensors
