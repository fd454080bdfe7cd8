import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays
from numpy.testing import assert_array_equal

from bevlift.tensor_io import TensorFormatError, decode_tensor, encode_tensor, read_tensor, write_tensor


def test_header_layout_for_2x3_zeros():
    buf = encode_tensor(np.zeros((2, 3)))
    assert len(buf) == 16 + 24
    assert buf[:4] == b"BEVT"
    assert struct.unpack("<HBB", buf[4:8]) == (1, 1, 2)
    assert struct.unpack("<2I", buf[8:16]) == (2, 3)
    assert buf[16:] == bytes(24)


def test_little_endian_payload():
    buf = encode_tensor(np.array([1.0]))
    assert buf[-4:] == struct.pack("<f", 1.0)


@given(arrays(np.float32, array_shapes(min_dims=0, max_dims=4, max_side=5), elements=st.floats(width=32)))
def test_round_trip_bitwise(a):
    back = decode_tensor(encode_tensor(a))
    assert back.shape == a.shape and back.dtype == np.float32
    assert back.tobytes() == a.astype("<f4").tobytes()


def test_file_round_trip(tmp_path):
    a = np.random.default_rng(0).normal(size=(4, 5, 6)).astype(np.float32)
    p = tmp_path / "t.tensor"
    write_tensor(p, a)
    assert_array_equal(read_tensor(p), a)
    write_tensor(tmp_path / "u.tensor", a)
    assert p.read_bytes() == (tmp_path / "u.tensor").read_bytes()


def test_bad_magic():
    buf = b"XXXX" + encode_tensor(np.zeros(2))[4:]
    with pytest.raises(TensorFormatError) as e:
        decode_tensor(buf)
    assert e.value.offset == 0


def test_bad_version_and_dtype():
    good = bytearray(encode_tensor(np.zeros(2)))
    bad = bytearray(good)
    bad[4] = 2
    with pytest.raises(TensorFormatError) as e:
        decode_tensor(bytes(bad))
    assert e.value.offset == 4
    bad = bytearray(good)
    bad[6] = 9
    with pytest.raises(TensorFormatError) as e:
        decode_tensor(bytes(bad))
    assert e.value.offset == 6


def test_truncation_and_trailing_bytes():
    good = encode_tensor(np.arange(6.0).reshape(2, 3))
    for cut in (3, 10, len(good) - 1):
        with pytest.raises(TensorFormatError):
            decode_tensor(good[:cut])
    with pytest.raises(TensorFormatError):
        decode_tensor(good + b"\0")


def test_format_error_is_value_error():
    assert issubclass(TensorFormatError, ValueError)
    assert "offset" in str(TensorFormatError("x", 3))
