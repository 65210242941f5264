"""Versioned binary container: text header plus named float64 blocks.

Layout (all integers little-endian):

    8 bytes   magic "MAMLCKPT"
    u32       format version (currently 1)
    u32       header byte count, then that many bytes of UTF-8 "key=value" lines
    u32       block count
    per block:
        u16   name byte count, then the UTF-8 name
        u8    ndim, then ndim u32 extents
        raw   little-endian float64 values, C order

Blocks are written in sorted-name order so identical contents produce
identical bytes; floats in the header are serialized with repr() and
round-trip exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"MAMLCKPT"
FORMAT_VERSION = 1


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file: expected {count} bytes for {what}, got {len(data)}")
    return data


def save_blocks(path, header: dict[str, str], blocks: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header_text = "".join(f"{k}={v}\n" for k, v in sorted(header.items()))
    header_bytes = header_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(blocks)))
        for name in sorted(blocks):
            # note: ascontiguousarray would promote 0-d arrays to 1-d;
            # tobytes() below already serializes any layout in C order
            arr = np.asarray(blocks[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_blocks(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(MAGIC), "magic")
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header_text = _read_exact(fh, header_len, "header").decode("utf-8")
        header = {}
        for line in header_text.splitlines():
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: malformed header line {line!r}")
            key, _, value = line.partition("=")
            header[key] = value
        (n_blocks,) = struct.unpack("<I", _read_exact(fh, 4, "block count"))
        blocks = {}
        for _ in range(n_blocks):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "block name length"))
            name = _read_exact(fh, name_len, "block name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "block ndim"))
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4, "block extent"))[0]
                          for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * 8, f"block '{name}' data")
            blocks[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        trailing = fh.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after the last block")
    return header, blocks
