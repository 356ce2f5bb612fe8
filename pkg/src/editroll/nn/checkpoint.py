"""Binary checkpoint format for scorer models.

Layout, all integers little-endian:

    magic   4 bytes  "ESNT"
    version u32      (currently 1)
    cfg_len u32, config JSON (utf-8)
    n_entries u32
    entry:  name_len u16, name utf-8, kind u8 (0 param / 1 buffer),
            dtype u8 (0 = float32), ndim u8, dims u32 * ndim, offset u64
    payload_len u64, payload (float32, little-endian, row-major)

Parameters are stored and kept as float32, so save -> load is
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .unet import ScorerModel, UNetConfig

MAGIC = b"ESNT"
VERSION = 1
_DTYPE_F32 = 0


def save_model(model: ScorerModel, path: str | Path) -> None:
    entries = bytearray()
    payload = bytearray()
    n = 0
    for kind, table in ((0, model.params), (1, model.buffers)):
        for name, value in table.items():
            arr = np.ascontiguousarray(value, dtype="<f4")
            raw = arr.tobytes()
            name_bytes = name.encode()
            entries += struct.pack("<H", len(name_bytes)) + name_bytes
            entries += struct.pack("<BBB", kind, _DTYPE_F32, arr.ndim)
            entries += struct.pack(f"<{arr.ndim}I", *arr.shape)
            entries += struct.pack("<Q", len(payload))
            payload += raw
            n += 1

    cfg_json = json.dumps(model.config.to_json_dict()).encode()
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += struct.pack("<I", len(cfg_json)) + cfg_json
    blob += struct.pack("<I", n)
    blob += entries
    blob += struct.pack("<Q", len(payload)) + payload
    Path(path).write_bytes(bytes(blob))


def _take(data: bytes, pos: int, count: int) -> tuple[bytes, int]:
    if pos + count > len(data):
        raise FormatError(f"checkpoint truncated at byte {pos}")
    return data[pos : pos + count], pos + count


def load_model(path: str | Path) -> ScorerModel:
    data = Path(path).read_bytes()
    chunk, pos = _take(data, 0, 4)
    if chunk != MAGIC:
        raise FormatError(f"bad checkpoint magic {chunk!r}")
    chunk, pos = _take(data, pos, 4)
    (version,) = struct.unpack("<I", chunk)
    if version != VERSION:
        raise FormatError(f"checkpoint version {version} is not supported (expected {VERSION})")
    chunk, pos = _take(data, pos, 4)
    (cfg_len,) = struct.unpack("<I", chunk)
    chunk, pos = _take(data, pos, cfg_len)
    try:
        config = UNetConfig.from_json_dict(json.loads(chunk.decode()))
    except (ValueError, KeyError) as exc:
        raise FormatError(f"bad config block: {exc}") from exc
    chunk, pos = _take(data, pos, 4)
    (n_entries,) = struct.unpack("<I", chunk)

    table: list[tuple[str, int, tuple[int, ...], int]] = []
    for _ in range(n_entries):
        chunk, pos = _take(data, pos, 2)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, pos = _take(data, pos, name_len)
        name = chunk.decode()
        chunk, pos = _take(data, pos, 3)
        kind, dtype, ndim = struct.unpack("<BBB", chunk)
        if dtype != _DTYPE_F32:
            raise FormatError(f"entry {name}: unknown dtype code {dtype}")
        chunk, pos = _take(data, pos, 4 * ndim)
        shape = struct.unpack(f"<{ndim}I", chunk)
        chunk, pos = _take(data, pos, 8)
        (offset,) = struct.unpack("<Q", chunk)
        table.append((name, kind, shape, offset))

    chunk, pos = _take(data, pos, 8)
    (payload_len,) = struct.unpack("<Q", chunk)
    payload, pos = _take(data, pos, payload_len)

    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for name, kind, shape, offset in table:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * count
        if end > payload_len:
            raise FormatError(f"entry {name}: payload slice {offset}..{end} out of range")
        arr = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape).copy()
        (params if kind == 0 else buffers)[name] = arr
    return ScorerModel(config, params, buffers)
