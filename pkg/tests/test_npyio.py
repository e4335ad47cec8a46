import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fdonet.npyio import MAGIC, NpyFormatError, read_npy, write_npy

# float32 (2, 3) fixture laid out by hand from the format description
GOLDEN_HEADER = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }"


def golden_bytes():
    values = np.arange(6, dtype="<f4")
    header = GOLDEN_HEADER + " " * (128 - 10 - len(GOLDEN_HEADER) - 1) + "\n"
    return (b"\x93NUMPY" + bytes([1, 0]) + struct.pack("<H", len(header))
            + header.encode("ascii") + values.tobytes())


def test_golden_file(tmp_path):
    path = tmp_path / "g.npy"
    write_npy(path, np.arange(6, dtype=np.float32).reshape(2, 3))
    data = path.read_bytes()
    assert data == golden_bytes()
    assert data[:6] == MAGIC
    assert (10 + struct.unpack("<H", data[8:10])[0]) % 64 == 0


def test_reads_golden(tmp_path):
    path = tmp_path / "g.npy"
    path.write_bytes(golden_bytes())
    assert np.array_equal(read_npy(path), np.arange(6, dtype=np.float32).reshape(2, 3))


@pytest.mark.parametrize("shape", [(), (1,), (7,), (2, 3), (4, 1, 70, 70), (2, 0, 3)])
@pytest.mark.parametrize("dtype", ["<f4", "<f8", "<i8", "|u1"])
def test_matches_numpy_save(tmp_path, shape, dtype):
    arr = np.arange(int(np.prod(shape)), dtype=dtype).reshape(shape)
    write_npy(tmp_path / "a.npy", arr)
    np.save(tmp_path / "b.npy", arr)
    assert (tmp_path / "a.npy").read_bytes() == (tmp_path / "b.npy").read_bytes()


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float32, hnp.array_shapes(max_dims=4, max_side=6)))
def test_reads_numpy_files(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("npy") / "x.npy"
    np.save(path, arr)
    out = read_npy(path)
    assert out.dtype == arr.dtype and out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()


def test_fortran_order_and_version2(tmp_path):
    arr = np.asfortranarray(np.arange(12.0).reshape(3, 4))
    np.save(tmp_path / "f.npy", arr)
    assert np.array_equal(read_npy(tmp_path / "f.npy"), arr)
    with open(tmp_path / "v2.npy", "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(2, 0))
    assert np.array_equal(read_npy(tmp_path / "v2.npy"), arr)


def test_cast_on_write(tmp_path):
    write_npy(tmp_path / "a.npy", np.array([1.5, 2.5]), dtype="<f4")
    out = read_npy(tmp_path / "a.npy")
    assert out.dtype == np.float32


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXNUMPY" + b[7:],
    lambda b: b[:6] + bytes([9, 0]) + b[8:],
    lambda b: b[:-4],
    lambda b: b[:12],
])
def test_malformed(tmp_path, mutate):
    path = tmp_path / "bad.npy"
    path.write_bytes(mutate(golden_bytes()))
    with pytest.raises(NpyFormatError):
        read_npy(path)
