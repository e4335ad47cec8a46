"""Reader/writer for the NPY array file format.

Files are written as format version 1.0: the magic string ``\\x93NUMPY``,
version bytes ``(1, 0)``, a little-endian u16 header length, then an ASCII
header dict padded with spaces and terminated by ``\\n`` so the data starts
on a 64-byte boundary, then the raw C-order data.

Reading also accepts versions 2.0 and 3.0 and Fortran-ordered arrays.
"""

from __future__ import annotations

import ast
import struct

import numpy as np

MAGIC = b"\x93NUMPY"
ALIGN = 64


class NpyFormatError(ValueError):
    pass


def _descr(dtype):
    dtype = np.dtype(dtype)
    if dtype.byteorder == ">" or (dtype.byteorder == "=" and not np.little_endian):
        raise NpyFormatError("only little-endian dtypes are written")
    return dtype.newbyteorder("<").str if dtype.itemsize > 1 else dtype.str


def header_bytes(descr, shape):
    shape_repr = "(" + ", ".join(str(int(n)) for n in shape) + ("," if len(shape) == 1 else "") + ")"
    header = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, shape_repr)
    prefix = len(MAGIC) + 2 + 2
    total = prefix + len(header) + 1
    header += " " * ((-total) % ALIGN) + "\n"
    if len(header) > 0xFFFF:
        raise NpyFormatError("header too long for format version 1.0")
    return MAGIC + bytes([1, 0]) + struct.pack("<H", len(header)) + header.encode("latin1")


def write_npy(path, array, dtype=None):
    """Write ``array`` (cast to ``dtype`` if given) as an NPY v1.0 file."""
    arr = np.asarray(array)
    if dtype is not None:
        arr = arr.astype(dtype)
    if arr.dtype.hasobject:
        raise NpyFormatError("object arrays are not supported")
    descr = _descr(arr.dtype)
    arr = arr.astype(np.dtype(descr), copy=False)
    with open(path, "wb") as fh:
        fh.write(header_bytes(descr, arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_header(fh):
    magic = fh.read(6)
    if magic != MAGIC:
        raise NpyFormatError("missing NPY magic string")
    version = tuple(fh.read(2))
    if version == (1, 0):
        (hlen,) = struct.unpack("<H", fh.read(2))
        encoding = "latin1"
    elif version in ((2, 0), (3, 0)):
        (hlen,) = struct.unpack("<I", fh.read(4))
        encoding = "latin1" if version == (2, 0) else "utf8"
    else:
        raise NpyFormatError(f"unsupported NPY version {version}")
    raw = fh.read(hlen)
    if len(raw) != hlen:
        raise NpyFormatError("truncated header")
    try:
        header = ast.literal_eval(raw.decode(encoding))
    except (SyntaxError, ValueError) as exc:
        raise NpyFormatError(f"unparseable header: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"malformed header {header!r}")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise NpyFormatError(f"bad shape {shape!r}")
    return version, np.dtype(header["descr"]), bool(header["fortran_order"]), shape


def read_npy(path):
    with open(path, "rb") as fh:
        _, dtype, fortran, shape = read_header(fh)
        if dtype.hasobject:
            raise NpyFormatError("object arrays are not supported")
        count = int(np.prod(shape)) if shape else 1
        data = fh.read(count * dtype.itemsize)
        if len(data) != count * dtype.itemsize:
            raise NpyFormatError("truncated data")
    arr = np.frombuffer(data, dtype=dtype, count=count)
    order = "F" if fortran else "C"
    return arr.reshape(shape, order=order).copy()
