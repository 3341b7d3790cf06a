"""Frame layout.

All integers are little-endian::

    offset  size  field
    0       3     magic  53 52 4C ("SRL")
    3       1     version (0x01)
    4       1     msg_kind (0x01 data, 0x02 params, 0x03 control)
    5       2     topic length (u16)
    7       n     topic bytes
    7+n     4     payload length (u32)
    11+n    m     payload bytes
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import FrameSizeError, IncompleteFrame, ProtocolError, VersionError

MAGIC = b"SRL"
VERSION = 1
HEADER_SIZE = 5
MIN_FRAME_SIZE = 11
MAX_TOPIC = 0xFFFF
MAX_PAYLOAD = 256 * 1024 * 1024

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


class MsgKind(enum.IntEnum):
    DATA = 0x01
    PARAMS = 0x02
    CONTROL = 0x03


@dataclass(frozen=True)
class Frame:
    kind: MsgKind
    topic: bytes = b""
    payload: bytes = b""


def _as_kind(kind) -> MsgKind:
    try:
        return MsgKind(kind)
    except ValueError:
        raise ProtocolError(f"unknown msg_kind 0x{int(kind):02x}") from None


def encode_frame(kind, topic: bytes = b"", payload: bytes = b"") -> bytes:
    kind = _as_kind(kind)
    if isinstance(topic, str):
        topic = topic.encode("utf-8")
    if len(topic) > MAX_TOPIC:
        raise FrameSizeError(f"topic is {len(topic)} bytes, limit {MAX_TOPIC}")
    if len(payload) > MAX_PAYLOAD:
        raise FrameSizeError(f"payload is {len(payload)} bytes, limit {MAX_PAYLOAD}")
    return b"".join(
        (MAGIC, bytes((VERSION, kind)), _U16.pack(len(topic)), topic, _U32.pack(len(payload)), payload)
    )


def frame_bytes(frame: Frame) -> bytes:
    return encode_frame(frame.kind, frame.topic, frame.payload)


def check_header(buf) -> MsgKind:
    """Validate the first five bytes of ``buf`` and return the message kind."""
    n = len(buf)
    head = bytes(buf[:3])
    if head != MAGIC[:len(head)]:
        raise ProtocolError(f"bad magic {head.hex(' ')}")
    if n < HEADER_SIZE:
        raise IncompleteFrame(HEADER_SIZE - n)
    if buf[3] != VERSION:
        raise VersionError(f"unsupported version {buf[3]}")
    return _as_kind(buf[4])


def split_frame(buf, offset: int = 0) -> tuple[Frame, int]:
    """Decode one frame from ``buf[offset:]``.

    Returns the frame and the offset just past it, so a byte stream holding
    several concatenated frames can be walked frame by frame.
    """
    view = memoryview(buf)[offset:]
    n = len(view)
    kind = check_header(view)
    if n < 7:
        raise IncompleteFrame(7 - n)
    (tlen,) = _U16.unpack_from(view, 5)
    plen_at = 7 + tlen
    if n < plen_at + 4:
        raise IncompleteFrame(plen_at + 4 - n)
    (plen,) = _U32.unpack_from(view, plen_at)
    if plen > MAX_PAYLOAD:
        raise FrameSizeError(f"declared payload {plen} exceeds limit {MAX_PAYLOAD}")
    end = plen_at + 4 + plen
    if n < end:
        raise IncompleteFrame(end - n)
    frame = Frame(kind, bytes(view[7:plen_at]), bytes(view[plen_at + 4:end]))
    return frame, offset + end


def decode_frame(data) -> Frame:
    frame, end = split_frame(data)
    if end != len(data):
        raise ProtocolError(f"{len(data) - end} trailing byte(s) after frame")
    return frame


class FrameBuffer:
    """Incremental splitter for a byte stream of concatenated frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data) -> list[Frame]:
        self._buf += data
        frames = []
        pos = 0
        while True:
            try:
                frame, pos_next = split_frame(self._buf, pos)
            except IncompleteFrame:
                break
            frames.append(frame)
            pos = pos_next
        if pos:
            del self._buf[:pos]
        return frames

    def __len__(self):
        return len(self._buf)
