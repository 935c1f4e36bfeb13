"""Binary tensor container for checkpoints and feature files.

Layout, all integers little-endian:

    magic "SGCE"
    u32 format version (1)
    u64 tensor count
    per tensor:
        u32 name length, UTF-8 name
        u8 dtype code (0=f32, 1=f64, 2=u64)
        u8 ndim, then ndim x u64 dims
        raw little-endian payload
    u64 step counter
    state blob (rest of file; opaque bytes)

Writing is a pure function of its inputs, so save -> load -> save
reproduces byte-identical files.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from skelfont.errors import SkelfontError

MAGIC = b"SGCE"
VERSION = 1

_DTYPE_BY_CODE = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<u8")}
_CODE_BY_KIND = {("f", 4): 0, ("f", 8): 1, ("u", 8): 2}


class ContainerError(SkelfontError):
    """Container bytes do not match the format."""


def _dtype_code(arr: np.ndarray) -> int:
    key = (arr.dtype.kind, arr.dtype.itemsize)
    if key not in _CODE_BY_KIND:
        raise ContainerError(f"unsupported dtype {arr.dtype}")
    return _CODE_BY_KIND[key]


def dump_container(tensors: Mapping[str, np.ndarray], step: int = 0,
                   blob: bytes = b"") -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        code = _dtype_code(arr)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype(_DTYPE_BY_CODE[code], copy=False).tobytes())
    parts.append(struct.pack("<Q", step))
    parts.append(blob)
    return b"".join(parts)


def parse_container(data: bytes) -> tuple[dict[str, np.ndarray], int, bytes]:
    if data[:4] != MAGIC:
        raise ContainerError("bad magic bytes")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (count,) = struct.unpack_from("<Q", data, 8)
    offset = 16
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", data, offset)
        offset += 2
        if code not in _DTYPE_BY_CODE:
            raise ContainerError(f"unknown dtype code {code}")
        dims = struct.unpack_from(f"<{ndim}Q", data, offset)
        offset += 8 * ndim
        dtype = _DTYPE_BY_CODE[code]
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        nbytes = size * dtype.itemsize
        raw = data[offset:offset + nbytes]
        if len(raw) != nbytes:
            raise ContainerError(f"truncated payload for tensor {name!r}")
        offset += nbytes
        arr = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
        tensors[name] = arr
    if offset + 8 > len(data):
        raise ContainerError("missing step counter")
    (step,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    blob = data[offset:]
    return tensors, int(step), blob


def save_container(path, tensors: Mapping[str, np.ndarray], step: int = 0,
                   blob: bytes = b""):
    payload = dump_container(tensors, step=step, blob=blob)
    with open(path, "wb") as fh:
        fh.write(payload)


def load_container(path) -> tuple[dict[str, np.ndarray], int, bytes]:
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_container(data)
