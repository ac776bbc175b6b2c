"""Versioned binary checkpoints.

Layout: magic "GPCK" | u32 version | u32 descriptor length | JSON descriptor
(architecture + ordered parameter names/shapes) | raw little-endian float32
blobs in descriptor order | trailing u32 CRC32 of everything before it.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..errors import BadCheckpoint

MAGIC = b"GPCK"
VERSION = 1


def dump_checkpoint(desc: dict, arrays: Sequence[tuple[str, np.ndarray]]) -> bytes:
    full = dict(desc)
    full["params"] = [{"name": name, "shape": list(a.shape)} for name, a in arrays]
    desc_bytes = json.dumps(full, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(desc_bytes)), desc_bytes]
    for _, a in arrays:
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def parse_checkpoint(payload: bytes) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    if len(payload) < 16 or payload[:4] != MAGIC:
        raise BadCheckpoint("missing GPCK magic")
    body, (crc,) = payload[:-4], struct.unpack("<I", payload[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise BadCheckpoint("CRC mismatch")
    version, desc_len = struct.unpack_from("<II", payload, 4)
    if version != VERSION:
        raise BadCheckpoint(f"unsupported checkpoint version {version}")
    desc_start = 12
    desc_bytes = payload[desc_start : desc_start + desc_len]
    if len(desc_bytes) < desc_len:
        raise BadCheckpoint("truncated descriptor")
    try:
        desc = json.loads(desc_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BadCheckpoint(f"bad descriptor: {e}") from None
    arrays = []
    pos = desc_start + desc_len
    for entry in desc.get("params", []):
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        blob = body[pos : pos + nbytes]
        if len(blob) < nbytes:
            raise BadCheckpoint(f"truncated blob for {entry['name']}")
        arrays.append((entry["name"], np.frombuffer(blob, dtype="<f4").reshape(shape).copy()))
        pos += nbytes
    if pos != len(body):
        raise BadCheckpoint("trailing bytes after parameter blobs")
    return desc, arrays


def save_checkpoint(path: Union[str, Path], desc: dict, arrays: Sequence[tuple[str, np.ndarray]]):
    Path(path).write_bytes(dump_checkpoint(desc, arrays))


def load_checkpoint(path: Union[str, Path]) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    return parse_checkpoint(Path(path).read_bytes())
