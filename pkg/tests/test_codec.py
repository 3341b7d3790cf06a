import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
from hypothesis.extra.numpy import arrays

from minisurreal.wireproto import CodecError, DepthError, deserialize, serialize, values_equal

scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(-(2 ** 63), 2 ** 63 - 1),
    st.floats(allow_nan=True, allow_infinity=True),
    st.binary(max_size=64),
    st.text(max_size=32),
    arrays(np.float64, st.integers(0, 4096)),
    arrays(np.float32, st.integers(0, 256)),
)

trees = st.recursive(
    scalars,
    lambda children: st.one_of(
        st.lists(children, max_size=6),
        st.dictionaries(st.text(max_size=8), children, max_size=6),
    ),
    max_leaves=30,
)


def test_null_golden():
    assert serialize(None) == bytes.fromhex("01 00 00 00 00")


def test_f64array_golden():
    expected = b"\x09" + struct.pack("<I", 8) + struct.pack("<d", 1.0)
    assert expected == bytes.fromhex("09 08 00 00 00 00 00 00 00 00 00 F0 3F")
    assert serialize(np.array([1.0])) == expected


def test_scalar_encodings():
    assert serialize(True) == bytes.fromhex("02 01 00 00 00 01")
    assert serialize(-2) == b"\x03" + struct.pack("<I", 8) + struct.pack("<q", -2)
    assert serialize(0.5) == b"\x04" + struct.pack("<I", 8) + struct.pack("<d", 0.5)
    assert serialize("é") == b"\x06" + struct.pack("<I", 2) + "é".encode()
    assert serialize(b"\x00\x01") == bytes.fromhex("05 02 00 00 00 00 01")
    assert serialize(np.array([1.0], dtype=np.float32)) == b"\x0a" + struct.pack("<I", 4) + struct.pack("<f", 1.0)


def test_map_roundtrip():
    v = {"r": 0.5}
    out = deserialize(serialize(v))
    assert values_equal(out, v)
    assert out == {"r": 0.5}


@pytest.mark.parametrize("n", [0, 1, 7, 1000])
def test_f64array_size(n):
    assert len(serialize(np.arange(n, dtype=np.float64))) == 5 + 8 * n


def test_decoded_arrays_are_writable_copies():
    buf = serialize(np.arange(4.0))
    arr = deserialize(buf)
    arr[0] = 99.0
    assert deserialize(buf)[0] == 0.0


def test_distinguishes_bool_int_float():
    assert deserialize(serialize(True)) is True
    assert type(deserialize(serialize(1))) is int
    assert type(deserialize(serialize(1.0))) is float
    assert not values_equal(True, 1)
    assert not values_equal(1, 1.0)


def test_unknown_tag():
    with pytest.raises(CodecError):
        deserialize(bytes.fromhex("FF 00 00 00 00"))


def test_length_exceeds_remaining():
    with pytest.raises(CodecError):
        deserialize(bytes.fromhex("05 10 00 00 00 AA"))


def test_truncated_header():
    with pytest.raises(CodecError):
        deserialize(b"\x01\x00")


def test_trailing_bytes():
    with pytest.raises(CodecError):
        deserialize(serialize(None) + b"\x00")


def test_array_body_not_multiple_of_width():
    with pytest.raises(CodecError):
        deserialize(bytes.fromhex("09 03 00 00 00 00 00 00"))


def test_duplicate_map_key_rejected():
    key = serialize("k")
    body = key + serialize(1) + key + serialize(2)
    with pytest.raises(CodecError):
        deserialize(b"\x08" + struct.pack("<I", len(body)) + body)


def test_non_str_key_rejected():
    with pytest.raises(CodecError):
        serialize({1: 2})


def test_unsupported_types():
    with pytest.raises(CodecError):
        serialize(object())
    with pytest.raises(CodecError):
        serialize(np.zeros((2, 2)))
    with pytest.raises(CodecError):
        serialize(np.zeros(3, dtype=np.int32))
    with pytest.raises(CodecError):
        serialize(2 ** 63)


def _nest(d):
    v = None
    for _ in range(d - 1):
        v = [v]
    return v


def test_depth_limit():
    assert deserialize(serialize(_nest(64))) == _nest(64)
    with pytest.raises(DepthError):
        serialize(_nest(65))


def test_depth_limit_on_decode():
    data = serialize(None)
    for _ in range(64):
        data = b"\x07" + struct.pack("<I", len(data)) + data
    with pytest.raises(DepthError):
        deserialize(data)


def test_nan_and_signed_zero_roundtrip():
    for x in (math.nan, -0.0, math.inf, -math.inf):
        assert values_equal(deserialize(serialize(x)), x)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_roundtrip_property(v):
    assert values_equal(deserialize(serialize(v)), v)
