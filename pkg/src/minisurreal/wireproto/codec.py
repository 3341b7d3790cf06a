"""Self-describing binary value codec.

Every value is ``tag (1 byte) + body length (u32 LE) + body``.  Python types
map onto the tags as follows:

====  =========  ==============================================
tag   variant    Python type
====  =========  ==============================================
0x01  Null       ``None``
0x02  Bool       ``bool`` (body: one byte, 0 or 1)
0x03  Int64      ``int`` (signed, little-endian)
0x04  Float64    ``float`` (IEEE-754, little-endian)
0x05  Bytes      ``bytes`` / ``bytearray`` / ``memoryview``
0x06  Utf8       ``str``
0x07  List       ``list`` / ``tuple`` (body: concatenated values)
0x08  Map        ``dict`` with ``str`` keys (body: Utf8 key, value, ...)
0x09  F64Array   1-D ``numpy`` float64 array, packed
0x0A  F32Array   1-D ``numpy`` float32 array, packed
====  =========  ==============================================

Decoding always yields ``list`` for List and native-endian, writable numpy
arrays for the array variants.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CodecError, DepthError

NULL, BOOL, INT64, FLOAT64, BYTES, UTF8, LIST, MAP, F64ARRAY, F32ARRAY = range(1, 11)

MAX_DEPTH = 64

_HDR = struct.Struct("<BI")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")
_HDR_SIZE = _HDR.size

_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1


def _put(out: bytearray, tag: int, body) -> None:
    out += _HDR.pack(tag, len(body))
    out += body


def _encode(v, out: bytearray, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise DepthError(f"value tree deeper than {MAX_DEPTH}")
    if v is None:
        out += _HDR.pack(NULL, 0)
    elif isinstance(v, (bool, np.bool_)):
        out += _HDR.pack(BOOL, 1)
        out.append(1 if v else 0)
    elif isinstance(v, (int, np.integer)):
        v = int(v)
        if not _INT64_MIN <= v <= _INT64_MAX:
            raise CodecError(f"integer {v} does not fit in int64")
        _put(out, INT64, _I64.pack(v))
    elif isinstance(v, (float, np.floating)):
        _put(out, FLOAT64, _F64.pack(float(v)))
    elif isinstance(v, (bytes, bytearray, memoryview)):
        _put(out, BYTES, v)
    elif isinstance(v, str):
        _put(out, UTF8, v.encode("utf-8"))
    elif isinstance(v, np.ndarray):
        if v.ndim != 1:
            raise CodecError(f"only 1-D arrays are encodable, got shape {v.shape}")
        if v.dtype == np.float64:
            _put(out, F64ARRAY, v.astype("<f8", copy=False).tobytes())
        elif v.dtype == np.float32:
            _put(out, F32ARRAY, v.astype("<f4", copy=False).tobytes())
        else:
            raise CodecError(f"unsupported array dtype {v.dtype}")
    elif isinstance(v, (list, tuple)):
        start = len(out)
        out += _HDR.pack(LIST, 0)
        for item in v:
            _encode(item, out, depth + 1)
        _HDR.pack_into(out, start, LIST, len(out) - start - _HDR_SIZE)
    elif isinstance(v, dict):
        start = len(out)
        out += _HDR.pack(MAP, 0)
        for key, item in v.items():
            if not isinstance(key, str):
                raise CodecError(f"map keys must be str, got {type(key).__name__}")
            _put(out, UTF8, key.encode("utf-8"))
            _encode(item, out, depth + 1)
        _HDR.pack_into(out, start, MAP, len(out) - start - _HDR_SIZE)
    else:
        raise CodecError(f"cannot encode {type(v).__name__}")


def serialize(v) -> bytes:
    out = bytearray()
    _encode(v, out, 1)
    return bytes(out)


def _decode(buf: memoryview, pos: int, end: int, depth: int):
    if depth > MAX_DEPTH:
        raise DepthError(f"value tree deeper than {MAX_DEPTH}")
    if end - pos < _HDR_SIZE:
        raise CodecError(f"truncated header at offset {pos}")
    tag, n = _HDR.unpack_from(buf, pos)
    pos += _HDR_SIZE
    stop = pos + n
    if stop > end:
        raise CodecError(f"declared length {n} at offset {pos - _HDR_SIZE} exceeds remaining {end - pos} byte(s)")
    if tag == NULL:
        if n:
            raise CodecError("Null with non-empty body")
        return None, stop
    if tag == BOOL:
        if n != 1 or buf[pos] > 1:
            raise CodecError("malformed Bool")
        return buf[pos] == 1, stop
    if tag == INT64:
        if n != 8:
            raise CodecError("Int64 body must be 8 bytes")
        return _I64.unpack_from(buf, pos)[0], stop
    if tag == FLOAT64:
        if n != 8:
            raise CodecError("Float64 body must be 8 bytes")
        return _F64.unpack_from(buf, pos)[0], stop
    if tag == BYTES:
        return bytes(buf[pos:stop]), stop
    if tag == UTF8:
        try:
            return str(buf[pos:stop], "utf-8"), stop
        except UnicodeDecodeError as exc:
            raise CodecError(f"invalid utf-8: {exc}") from None
    if tag == F64ARRAY or tag == F32ARRAY:
        width, dtype = (8, "<f8") if tag == F64ARRAY else (4, "<f4")
        if n % width:
            raise CodecError(f"array body of {n} bytes is not a multiple of {width}")
        arr = np.frombuffer(buf, dtype=dtype, count=n // width, offset=pos)
        return arr.astype(dtype[1:], copy=True), stop
    if tag == LIST:
        items = []
        while pos < stop:
            item, pos = _decode(buf, pos, stop, depth + 1)
            items.append(item)
        return items, stop
    if tag == MAP:
        d = {}
        while pos < stop:
            if stop - pos < _HDR_SIZE or buf[pos] != UTF8:
                raise CodecError(f"map key at offset {pos} is not Utf8")
            key, pos = _decode(buf, pos, stop, depth + 1)
            if key in d:
                raise CodecError(f"duplicate map key {key!r}")
            if pos >= stop:
                raise CodecError(f"map key {key!r} has no value")
            d[key], pos = _decode(buf, pos, stop, depth + 1)
        return d, stop
    raise CodecError(f"unknown tag 0x{tag:02x} at offset {pos - _HDR_SIZE}")


def deserialize(data):
    buf = memoryview(data).cast("B")
    value, pos = _decode(buf, 0, len(buf), 1)
    if pos != len(buf):
        raise CodecError(f"{len(buf) - pos} trailing byte(s) after value")
    return value


def depth(v) -> int:
    """Tree depth as counted by the codec (a scalar has depth 1)."""
    if isinstance(v, (list, tuple)):
        return 1 + max((depth(x) for x in v), default=0)
    if isinstance(v, dict):
        return 1 + max((depth(x) for x in v.values()), default=0)
    return 1


def values_equal(a, b) -> bool:
    """Structural equality that distinguishes every codec variant.

    Floats compare bitwise, so ``nan`` equals ``nan`` and ``0.0`` differs
    from ``-0.0``; ``True`` is not equal to ``1``.
    """
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (
            isinstance(a, np.ndarray)
            and isinstance(b, np.ndarray)
            and a.dtype == b.dtype
            and a.shape == b.shape
            and a.tobytes() == b.tobytes()
        )
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    if isinstance(a, float) or isinstance(b, float):
        return isinstance(a, float) and isinstance(b, float) and _F64.pack(a) == _F64.pack(b)
    if isinstance(a, (list, tuple)):
        return isinstance(b, (list, tuple)) and len(a) == len(b) and all(map(values_equal, a, b))
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    if isinstance(a, (bytes, bytearray, memoryview)):
        return isinstance(b, (bytes, bytearray, memoryview)) and bytes(a) == bytes(b)
    return type(a) is type(b) and a == b


def pack_array(arr) -> dict:
    """Encode an n-D float array as ``{"shape": [...], "data": F64Array}``."""
    arr = np.asarray(arr)
    dtype = np.float32 if arr.dtype == np.float32 else np.float64
    return {"shape": list(arr.shape), "data": np.ascontiguousarray(arr, dtype=dtype).ravel()}


def unpack_array(v: dict) -> np.ndarray:
    try:
        return v["data"].reshape(v["shape"])
    except (KeyError, AttributeError, ValueError) as exc:
        raise CodecError(f"malformed packed array: {exc}") from None

