"""Single-file little-endian checkpoint format.

Layout::

    b"IPA1"
    u64 length of the JSON block, then the UTF-8 JSON block (sorted keys)
    repeated until EOF, one record per tensor:
        u32 name length, UTF-8 name
        u8 dtype tag (0 float32, 1 float64, 2 int64)
        u32 rank, rank x u64 extents
        raw little-endian element bytes, row-major
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ContractError

MAGIC = b"IPA1"
_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i8"): 2}
_DTYPES = {v: k for k, v in _TAGS.items()}


def dumps_checkpoint(meta: dict, tensors: Mapping[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    block = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.write(struct.pack("<Q", len(block)))
    out.write(block)
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.dtype.newbyteorder("<")
        if le not in _TAGS:
            raise ContractError(f"checkpoint: unsupported dtype {arr.dtype} for {name!r}")
        raw_name = name.encode("utf-8")
        out.write(struct.pack("<I", len(raw_name)))
        out.write(raw_name)
        out.write(struct.pack("<BI", _TAGS[le], arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(np.ascontiguousarray(arr, dtype=le).tobytes())
    return out.getvalue()


def loads_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        return _parse(data)
    except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ContractError(f"corrupt checkpoint: {exc}") from None


def _parse(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise ContractError("not a checkpoint file (bad magic)")
    pos = 4
    (size,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    meta = json.loads(data[pos:pos + size].decode("utf-8"))
    pos += size
    tensors: dict[str, np.ndarray] = {}
    while pos < len(data):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        tag, rank = struct.unpack_from("<BI", data, pos)
        pos += 5
        shape = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        dtype = _DTYPES[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos)
        tensors[name] = arr.reshape(shape).astype(dtype.newbyteorder("="))
        pos += nbytes
    return meta, tensors


def save_checkpoint(path, meta: dict, tensors: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps_checkpoint(meta, tensors))
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads_checkpoint(Path(path).read_bytes())
