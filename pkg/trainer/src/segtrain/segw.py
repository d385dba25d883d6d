"""Writer/reader for the SEGW tensor container (the export wire format).

Independent implementation of the same layout the runtime consumes:
magic "SEGW", u16 version 1, u16 tensor count, per tensor a u16-length UTF-8
name, u8 rank, u32 dims and float32 data, all little-endian, closed by a
CRC-32 over every preceding byte.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"SEGW"
VERSION = 1


class SegwError(Exception):
    pass


def save_tensors(path, tensors: dict) -> None:
    body = bytearray()
    body += MAGIC
    body += struct.pack("<HH", VERSION, len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(body))


def load_tensors(path) -> dict:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise SegwError("not a SEGW container")
    version, count = struct.unpack_from("<HH", raw, 4)
    if version != VERSION:
        raise SegwError(f"unsupported version {version}")
    if struct.unpack_from("<I", raw, len(raw) - 4)[0] != (zlib.crc32(raw[:-4]) & 0xFFFFFFFF):
        raise SegwError("checksum mismatch")
    out = {}
    off = 8
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", raw, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
    return out
