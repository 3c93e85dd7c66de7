"""The NTA1 checkpoint/dataset container.

Layout (all integers little-endian):

    magic "NTA1" | u32 entry count | entries...

Each entry: u16 name length, UTF-8 name, u8 dtype code, u8 ndim,
ndim x u64 dims, raw little-endian payload. Dtype codes: 0 = float32,
1 = int64, 2 = UTF-8 text (ndim 1, dims = [byte length]). Metadata is a
JSON text entry named "__meta__". Float tensors are stored in 32-bit, so
round-trips are exact only to float32 precision (relative error at most
2^-24).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"NTA1"
_DTYPE_F32 = 0
_DTYPE_I64 = 1
_DTYPE_UTF8 = 2
META_ENTRY = "__meta__"


class ContainerError(ValueError):
    """Malformed container file or invalid save request."""


def _pack_entry(name: str, dtype: int, dims: tuple[int, ...], payload: bytes) -> bytes:
    name_bytes = name.encode("utf-8")
    if not name_bytes:
        raise ContainerError("entry names must be non-empty")
    if len(name_bytes) > 0xFFFF:
        raise ContainerError(f"entry name too long: {len(name_bytes)} bytes")
    head = struct.pack("<H", len(name_bytes)) + name_bytes
    head += struct.pack("<BB", dtype, len(dims))
    head += struct.pack(f"<{len(dims)}Q", *dims) if dims else b""
    return head + payload


def save_container(path: str | os.PathLike, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Write named tensors (and optional JSON metadata) to `path`.

    Float arrays are stored as float32, integer arrays as int64. Names
    must be unique and non-empty; the name "__meta__" is reserved.
    """
    entries: list[bytes] = []
    seen: set[str] = set()
    for name, value in tensors.items():
        if name in seen:
            raise ContainerError(f"duplicate entry name {name!r}")
        if name == META_ENTRY:
            raise ContainerError(f"{META_ENTRY!r} is reserved for metadata")
        seen.add(name)
        arr = np.asarray(value)
        if np.issubdtype(arr.dtype, np.integer):
            data = np.ascontiguousarray(arr, dtype="<i8")
            dtype = _DTYPE_I64
        else:
            data = np.ascontiguousarray(arr, dtype="<f4")
            dtype = _DTYPE_F32
        entries.append(_pack_entry(name, dtype, arr.shape, data.tobytes()))
    if metadata is not None:
        blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
        entries.append(_pack_entry(META_ENTRY, _DTYPE_UTF8, (len(blob),), blob))
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(entries)))
        for entry in entries:
            fh.write(entry)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise ContainerError("truncated container file")
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out


def load_container(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors and metadata back; float32 entries upcast to float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    reader = _Reader(blob)
    magic = reader.take(4)
    if magic != MAGIC:
        if magic[:3] == MAGIC[:3]:
            raise ContainerError(f"unsupported container version {magic[3:]!r}")
        raise ContainerError(f"bad magic {magic!r}")
    (count,) = struct.unpack("<I", reader.take(4))
    tensors: dict[str, np.ndarray] = {}
    metadata: dict = {}
    saw_meta = False
    for _ in range(count):
        (name_len,) = struct.unpack("<H", reader.take(2))
        name = reader.take(name_len).decode("utf-8")
        dtype, ndim = struct.unpack("<BB", reader.take(2))
        dims = struct.unpack(f"<{ndim}Q", reader.take(8 * ndim)) if ndim else ()
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        if name in tensors or (name == META_ENTRY and saw_meta):
            raise ContainerError(f"duplicate entry name {name!r}")
        if name == META_ENTRY:
            saw_meta = True
        if dtype == _DTYPE_F32:
            raw = reader.take(4 * size)
            tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(dims)
        elif dtype == _DTYPE_I64:
            raw = reader.take(8 * size)
            tensors[name] = np.frombuffer(raw, dtype="<i8").astype(np.int64).reshape(dims)
        elif dtype == _DTYPE_UTF8:
            if ndim != 1:
                raise ContainerError("text entries must be 1-dimensional")
            raw = reader.take(size)
            if name == META_ENTRY:
                metadata = json.loads(raw.decode("utf-8"))
            else:
                tensors[name] = np.frombuffer(raw, dtype=np.uint8).copy()
        else:
            raise ContainerError(f"unknown dtype code {dtype}")
    if reader.pos != len(blob):
        raise ContainerError(f"{len(blob) - reader.pos} trailing bytes after last entry")
    return tensors, metadata
