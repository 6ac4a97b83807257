"""
Binary container for checkpoints, datasets and motion files.

Layout (little-endian):
    header   magic "MTLK" | u32 version | u64 seed | u32 metadata length
    metadata UTF-8 JSON with sorted keys
    table    u32 array count, then per array:
             u16 name length | name | u8 ndim | u64 per dim | float64 data
    trailer  u64 payload length | u32 CRC32 of the payload
"""
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping

import numpy as np

from app.models.errors import ArchiveError
from app.utils.files import PathLike, atomic_write_bytes
from app.utils.logging import setup_logger

logger = setup_logger("Archive")

MAGIC = b"MTLK"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")
_TRAILER = struct.Struct("<QI")
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_DIM = struct.Struct("<Q")


@dataclass
class Archive:
    seed: int
    meta: Dict[str, Any] = field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return str(self.meta.get("kind", ""))

    def require(self, name: str) -> np.ndarray:
        if name not in self.arrays:
            raise ArchiveError(f"archive has no array '{name}'")
        return self.arrays[name]


def encode_archive(seed: int, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> bytes:
    """
    Serialise arrays and metadata

    Arrays are written in sorted name order as float64, so equal inputs give
    equal bytes.
    """
    if not 0 <= seed < 2 ** 64:
        raise ArchiveError(f"seed {seed} does not fit in u64")
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_HEADER.pack(MAGIC, VERSION, seed, len(meta_bytes)), meta_bytes, _COUNT.pack(len(arrays))]
    for name in sorted(arrays):
        value = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded_name = name.encode("utf-8")
        if len(encoded_name) >= 2 ** 16 or value.ndim >= 2 ** 8:
            raise ArchiveError(f"array '{name}' cannot be stored")
        parts.append(_NAME_LEN.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(_NDIM.pack(value.ndim))
        parts.extend(_DIM.pack(d) for d in value.shape)
        parts.append(value.tobytes())
    payload = b"".join(parts)
    return payload + _TRAILER.pack(len(payload), zlib.crc32(payload))


def decode_archive(data: bytes) -> Archive:
    """
    Parse and verify an archive

    Raises:
        ArchiveError: On bad magic, unknown version, truncation or CRC mismatch
    """
    if len(data) < _HEADER.size + _TRAILER.size:
        raise ArchiveError(f"archive truncated: {len(data)} bytes")
    magic, version, seed, meta_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ArchiveError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    payload_len, crc = _TRAILER.unpack_from(data, len(data) - _TRAILER.size)
    if payload_len != len(data) - _TRAILER.size:
        raise ArchiveError(f"archive truncated: expected {payload_len} payload bytes, found {len(data) - _TRAILER.size}")
    payload = data[:payload_len]
    if zlib.crc32(payload) != crc:
        raise ArchiveError("archive checksum mismatch")

    try:
        offset = _HEADER.size
        meta = json.loads(payload[offset:offset + meta_len].decode("utf-8"))
        offset += meta_len
        (count,) = _COUNT.unpack_from(payload, offset)
        offset += _COUNT.size
        arrays: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = _NAME_LEN.unpack_from(payload, offset)
            offset += _NAME_LEN.size
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = _NDIM.unpack_from(payload, offset)
            offset += _NDIM.size
            shape = tuple(_DIM.unpack_from(payload, offset + i * _DIM.size)[0] for i in range(ndim))
            offset += ndim * _DIM.size
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8
            if offset + nbytes > payload_len:
                raise ArchiveError(f"array '{name}' runs past the end of the archive")
            arrays[name] = np.frombuffer(payload, dtype="<f8", count=nbytes // 8, offset=offset).astype(np.float64).reshape(shape)
            offset += nbytes
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchiveError(f"malformed archive: {e}") from e
    if offset != payload_len:
        raise ArchiveError(f"{payload_len - offset} trailing bytes after the array table")
    return Archive(seed=seed, meta=meta, arrays=arrays)


def save_archive(path: PathLike, archive: Archive) -> Path:
    written = atomic_write_bytes(path, encode_archive(archive.seed, archive.meta, archive.arrays))
    logger.debug(f"Saved archive {written}", extra={"kind": archive.kind, "arrays": len(archive.arrays)})
    return written


def load_archive(path: PathLike, kind: str = "") -> Archive:
    """
    Read an archive, optionally checking its kind

    Raises:
        ArchiveError: If the file is unreadable, corrupt or of another kind
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArchiveError(f"cannot read archive {path}: {e}") from e
    archive = decode_archive(data)
    if kind and archive.kind != kind:
        raise ArchiveError(f"{path} holds a '{archive.kind}' archive, expected '{kind}'")
    return archive
