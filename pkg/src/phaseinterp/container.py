"""Versioned binary container of named arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"NARC"
    version u32
    count   u32
    entry*  name_len u32 | name utf-8 | dtype u8 | rank u8 | dims u32*rank |
            raw row-major little-endian data
    crc32   u32 over everything before it

Round-trips are bit-exact; loads verify the checksum before returning, so a
truncated or corrupted file never yields partial data.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

MAGIC = b"NARC"
VERSION = 1

_DTYPE_TAGS = {
    np.dtype("<f8"): 0,
    np.dtype("<f4"): 1,
    np.dtype("<i8"): 2,
    np.dtype("uint8"): 3,
    np.dtype("<c16"): 4,
    np.dtype("<u8"): 5,
}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class ContainerFormatError(IOError):
    """File is not a valid container of a supported version."""


class ChecksumError(ContainerFormatError):
    """Stored checksum does not match the file contents."""


def write_container(path: str, arrays: dict[str, np.ndarray]):
    """Serialize named arrays; the write is atomic (temp file + rename)."""
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        canonical = arr.dtype.newbyteorder("<")
        if canonical not in _DTYPE_TAGS:
            raise ValueError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        arr = arr.astype(canonical, copy=False)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", _DTYPE_TAGS[canonical], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_container(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise ContainerFormatError(f"{path}: not a named-array container")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError(f"{path}: checksum mismatch (truncated or corrupt)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise ContainerFormatError(
            f"{path}: unsupported container version {version} (expected {VERSION})"
        )
    (count,) = struct.unpack("<I", blob[8:12])
    offset = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        tag, rank = struct.unpack_from("<BB", blob, offset)
        offset += 2
        dims = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        if tag not in _TAG_DTYPES:
            raise ContainerFormatError(f"{path}: unknown dtype tag {tag}")
        dtype = _TAG_DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        data = np.frombuffer(blob, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)), offset=offset)
        offset += nbytes
        out[name] = data.reshape(dims).copy()
    return out
