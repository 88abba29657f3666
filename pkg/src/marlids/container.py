"""Versioned single-file container for models and datasets.

Layout::

    magic (8 bytes) | header length (uint64 LE) | header (UTF-8 JSON)
    | raw array blocks | SHA-256 of everything before it (32 bytes)

The header carries the caller's metadata plus a manifest of the array
blocks (name, dtype, shape, offset).  JSON is written with sorted keys and no
whitespace so identical content always produces identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ContainerError

MAGIC = b"MARLIDS\x00"
FORMAT_VERSION = 1
_DIGEST_LEN = 32


def dumps(kind: str, meta: Mapping, arrays: Mapping[str, np.ndarray]) -> bytes:
    manifest, blocks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype == object:
            raise ContainerError(f"array {name!r} has object dtype")
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        manifest.append({"name": name, "dtype": arr.dtype.newbyteorder("<").str,
                         "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blocks.append(data)
        offset += len(data)
    header = {"format_version": FORMAT_VERSION, "kind": kind, "meta": meta, "arrays": manifest}
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    body = MAGIC + struct.pack("<Q", len(head)) + head + b"".join(blocks)
    return body + hashlib.sha256(body).digest()


def loads(raw: bytes, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    if len(raw) < len(MAGIC) + 8 + _DIGEST_LEN or raw[: len(MAGIC)] != MAGIC:
        raise ContainerError("not a container file (bad magic bytes)")
    body, digest = raw[:-_DIGEST_LEN], raw[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise ContainerError("container digest mismatch; file is corrupt")
    (head_len,) = struct.unpack("<Q", body[len(MAGIC): len(MAGIC) + 8])
    start = len(MAGIC) + 8
    try:
        header = json.loads(body[start: start + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable container header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(
            f"unsupported container version {header.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}")
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"expected a {kind} container, found {header.get('kind')!r}")
    data = body[start + head_len:]
    arrays = {}
    for entry in header["arrays"]:
        chunk = data[entry["offset"]: entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(chunk, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return header["meta"], arrays


def write(path, kind: str, meta: Mapping, arrays: Mapping[str, np.ndarray]) -> str:
    """Write a container and return the SHA-256 hex digest of the whole file."""
    raw = dumps(kind, meta, arrays)
    Path(path).write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()


def read(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes(), kind)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
