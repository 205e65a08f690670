"""Small helpers for the package's checksummed little-endian binary files.

Every file written here has the layout::

    magic        8 bytes
    version      uint32
    header_len   uint32
    header       header_len bytes of UTF-8 JSON
    payload      raw little-endian arrays, in the order listed by the header
    crc32        uint32 over every preceding byte

The header lists each array as ``{"name", "dtype", "shape"}``.  Readers check
magic, version, lengths and the checksum before returning anything, so a
truncated or corrupted file never loads partially.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError

_DTYPES = {"f8": "<f8", "i8": "<i8"}


def encode(magic: bytes, version: int, header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    specs = []
    chunks = []
    for name, arr in arrays:
        arr = np.asarray(arr)
        code = "i8" if np.issubdtype(arr.dtype, np.integer) else "f8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        specs.append({"name": name, "dtype": code, "shape": list(data.shape)})
        chunks.append(data.tobytes())
    head = dict(header)
    head["arrays"] = specs
    hbytes = json.dumps(head, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join([magic, struct.pack("<II", version, len(hbytes)), hbytes, *chunks])
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode(blob: bytes, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    n = len(blob)
    if n < len(magic) + 12:
        raise FormatError("file too short", offset=n)
    if blob[: len(magic)] != magic:
        raise FormatError(f"bad magic {blob[:len(magic)]!r}, expected {magic!r}", offset=0)
    (crc,) = struct.unpack_from("<I", blob, n - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise FormatError("checksum mismatch (file corrupted or truncated)", offset=n - 4)
    pos = len(magic)
    ver, hlen = struct.unpack_from("<II", blob, pos)
    if ver != version:
        raise FormatError(f"unsupported format version {ver}, expected {version}", offset=pos)
    pos += 8
    if pos + hlen > n - 4:
        raise FormatError("header runs past end of file", offset=pos)
    try:
        header = json.loads(blob[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}", offset=pos) from None
    pos += hlen
    arrays = {}
    for spec in header.get("arrays", []):
        dtype = np.dtype(_DTYPES[spec["dtype"]])
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > n - 4:
            raise FormatError(f"array {spec['name']!r} truncated", offset=pos)
        arrays[spec["name"]] = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize,
                                             offset=pos).reshape(shape).astype(dtype.newbyteorder("="))
        pos += nbytes
    if pos != n - 4:
        raise FormatError("trailing bytes after payload", offset=pos)
    return header, arrays


def write_atomic(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()
