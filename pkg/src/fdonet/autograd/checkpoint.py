"""Binary checkpoint files.

Layout (all integers little-endian)::

    magic    8 bytes  b"FDONCKPT"
    version  u32      currently 1
    meta     u32 length + UTF-8 JSON object (config, norm stats, ...)
    count    u32      number of arrays
    per array, in order:
        name   u16 length + UTF-8
        ndim   u8
        dims   ndim x u64
        data   prod(dims) x float64 ('<f8'), row-major
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"FDONCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays, meta=None):
    """Write an ordered mapping ``name -> array`` plus a JSON ``meta`` record."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr).astype("<f8", copy=False)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def _read(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint")
    return buf


def load_checkpoint(path):
    """Return ``(arrays, meta)`` with arrays in file order."""
    with open(path, "rb") as fh:
        if _read(fh, 8) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read(fh, 4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<I", _read(fh, 4))
        meta = json.loads(_read(fh, mlen).decode("utf-8"))
        (count,) = struct.unpack("<I", _read(fh, 4))
        arrays = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read(fh, 2))
            name = _read(fh, nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(fh, 1))
            shape = struct.unpack(f"<{ndim}Q", _read(fh, 8 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(_read(fh, 8 * n), dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after last array")
    return arrays, meta
