# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Self-describing checkpoint files.

Layout: magic ``BFFNCKPT``, u32 version, u32 header length, canonical JSON
header (config echo, step, tensor directory), u32 CRC-32 of the header,
the payload of float32 little-endian tensors, u32 CRC-32 of the payload.
All integers are little-endian.
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np

from blockffnpy.common import ConfigError, crc32
from blockffnpy.training.config import TrainConfig, config_from_dict, config_to_dict

_log = logging.getLogger(__name__)

MAGIC = b"BFFNCKPT"
VERSION = 1
_U32 = struct.Struct("<I")
_DTYPE = np.dtype("<f4")


class CheckpointError(Exception):
    """
    Generic checkpoint exception for bad magic, versions, lengths and CRCs.
    """


@dataclass
class Checkpoint:
    """A loaded checkpoint."""
    config: TrainConfig
    tensors: Dict[str, np.ndarray]
    step: int


def _build_header(config: TrainConfig, tensors: Dict[str, np.ndarray], step: int) -> bytes:
    directory = []
    offset = 0
    for name, value in tensors.items():
        rows, cols = value.shape
        directory.append({"name": name, "rows": rows, "cols": cols, "offset": offset})
        offset += rows * cols * _DTYPE.itemsize
    header = {"config": config_to_dict(config), "step": step, "tensors": directory}
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_checkpoint(config: TrainConfig, tensors: Dict[str, np.ndarray], step: int) -> bytes:
    """Serialise to the on-disk byte layout."""
    header = _build_header(config, tensors, step)
    payload = b"".join(np.ascontiguousarray(value, dtype=_DTYPE).tobytes()
                       for value in tensors.values())
    return b"".join((MAGIC, _U32.pack(VERSION), _U32.pack(len(header)), header,
                     _U32.pack(crc32(header)), payload, _U32.pack(crc32(payload))))


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse and verify the on-disk byte layout."""
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("Bad magic, not a checkpoint file")
    pos = len(MAGIC)
    if len(data) < pos + 2 * _U32.size:
        raise CheckpointError("Truncated checkpoint preamble")
    version, = _U32.unpack_from(data, pos)
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    header_len, = _U32.unpack_from(data, pos + _U32.size)
    pos += 2 * _U32.size
    if len(data) < pos + header_len + 2 * _U32.size:
        raise CheckpointError("Truncated checkpoint header")
    header = data[pos:pos + header_len]
    pos += header_len
    if _U32.unpack_from(data, pos)[0] != crc32(header):
        raise CheckpointError("Header CRC mismatch")
    pos += _U32.size
    payload = data[pos:-_U32.size]
    if _U32.unpack_from(data, len(data) - _U32.size)[0] != crc32(payload):
        raise CheckpointError("Payload CRC mismatch")

    meta = json.loads(header.decode("utf-8"))
    try:
        config = config_from_dict(meta["config"])
    except ConfigError as error:
        raise CheckpointError(f"Checkpoint config is invalid: {error}") from error
    tensors = {}
    for entry in meta["tensors"]:
        count = entry["rows"] * entry["cols"]
        end = entry["offset"] + count * _DTYPE.itemsize
        if end > len(payload):
            raise CheckpointError(f"Tensor {entry['name']} runs past the payload")
        values = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=entry["offset"])
        tensors[entry["name"]] = values.reshape(entry["rows"], entry["cols"]).astype(np.float32)
    return Checkpoint(config, tensors, int(meta["step"]))


def save_checkpoint(path: Path, config: TrainConfig, tensors: Dict[str, np.ndarray],
                    step: int) -> Path:
    """Write a checkpoint file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(config, tensors, step))
    _log.info("Wrote checkpoint %s at step %d", path, step)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """Read and verify a checkpoint file."""
    try:
        data = Path(path).read_bytes()
    except OSError as error:
        raise CheckpointError(f"Cannot read checkpoint {path}: {error}") from error
    return decode_checkpoint(data)
