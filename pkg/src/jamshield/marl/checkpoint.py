"""Versioned binary tensor container shared by policy checkpoints and detector weights.

Layout (all integers little-endian):
    b"JSHD" | u16 version | u32 header_len | header JSON (UTF-8) | u32 tensor_count
    then per tensor: u16 name_len | name (UTF-8) | u8 ndim | u32 * ndim shape | <f8 data
"""

import json
import logging
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np
import torch

from jamshield.errors import DomainError

logger = logging.getLogger(__name__)

MAGIC = b"JSHD"
VERSION = 1


def encode_tensors(header: Mapping, tensors: Mapping[str, np.ndarray | torch.Tensor]) -> bytes:
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(header_bytes)), header_bytes]
    parts.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        arr = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_tensors(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if blob[:4] != MAGIC:
        raise DomainError("not a jamshield tensor file")
    version, header_len = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise DomainError(f"unsupported tensor file version {version}")
    offset = 10
    header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        tensors[name] = data.reshape(shape).astype(np.float64)
    if offset != len(blob):
        raise DomainError("trailing bytes after the last tensor")
    return header, tensors


def save_tensors(path: str | Path, header: Mapping, tensors: Mapping[str, np.ndarray | torch.Tensor]) -> None:
    Path(path).write_bytes(encode_tensors(header, tensors))
    logger.debug("Wrote %d tensors to %s", len(tensors), path)


def load_tensors(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_tensors(Path(path).read_bytes())
