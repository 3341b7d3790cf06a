"""Versioned parameter snapshots and the subscriber-side cache."""

from __future__ import annotations

import struct
import threading
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..wireproto import (
    CodecError,
    Frame,
    MsgKind,
    Publisher,
    Subscriber,
    TransportError,
    deserialize,
    serialize,
)

PARAMS_TOPIC = b"params"


class NotReady(LookupError):
    """No valid snapshot has been received yet."""


class CorruptSnapshot(ValueError):
    """A snapshot whose checksum does not match its contents."""


def params_checksum(version: int, flat: np.ndarray) -> int:
    """64-bit check value: crc32 in the high word, adler32 in the low word."""
    data = struct.pack("<q", version) + np.ascontiguousarray(flat, dtype="<f8").tobytes()
    return (zlib.crc32(data) << 32) | zlib.adler32(data)


@dataclass(frozen=True, eq=False)
class ParameterSnapshot:
    version: int
    flat_params: np.ndarray
    checksum: int
    timestamp: float = field(default_factory=time.time)

    @classmethod
    def create(cls, version: int, flat_params, timestamp: float | None = None) -> "ParameterSnapshot":
        flat = np.ascontiguousarray(flat_params, dtype=np.float64).ravel().copy()
        flat.setflags(write=False)
        ts = time.time() if timestamp is None else timestamp
        return cls(int(version), flat, params_checksum(int(version), flat), ts)

    def verify(self) -> bool:
        return params_checksum(self.version, self.flat_params) == self.checksum

    def to_value(self) -> dict:
        return {
            "version": self.version,
            "params": self.flat_params,
            "checksum": self.checksum.to_bytes(8, "little"),
            "timestamp": float(self.timestamp),
        }

    @classmethod
    def from_value(cls, value) -> "ParameterSnapshot":
        try:
            checksum = int.from_bytes(value["checksum"], "little")
            flat = np.asarray(value["params"], dtype=np.float64)
            return cls(int(value["version"]), flat, checksum, float(value["timestamp"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptSnapshot(f"malformed snapshot: {exc}") from None

    def encode(self) -> bytes:
        return serialize(self.to_value())

    @classmethod
    def decode(cls, payload: bytes, verify: bool = True) -> "ParameterSnapshot":
        try:
            snap = cls.from_value(deserialize(payload))
        except CodecError as exc:
            raise CorruptSnapshot(str(exc)) from None
        if verify and not snap.verify():
            raise CorruptSnapshot(f"checksum mismatch for version {snap.version}")
        return snap


def snapshot_frame(snapshot: ParameterSnapshot) -> Frame:
    return Frame(MsgKind.PARAMS, PARAMS_TOPIC, snapshot.encode())


class ParameterPublisher:
    """Publish side: refuses to go backwards in version."""

    def __init__(self, publisher: Publisher):
        self.publisher = publisher
        self.version = None
        self._latest: Frame | None = None

    def publish(self, snapshot: ParameterSnapshot) -> int:
        if self.version is not None and snapshot.version <= self.version:
            raise ValueError(f"version {snapshot.version} does not exceed {self.version}")
        self.version = snapshot.version
        self._latest = snapshot_frame(snapshot)
        return self.publisher.publish(self._latest)

    def publish_frame(self, frame: Frame, version: int) -> int:
        """Forward an already-encoded snapshot frame."""
        if self.version is not None and version <= self.version:
            raise ValueError(f"version {version} does not exceed {self.version}")
        self.version = version
        self._latest = frame
        return self.publisher.publish(frame)

    def republish(self) -> int:
        """Resend the newest snapshot so late subscribers catch up."""
        return self.publisher.publish(self._latest) if self._latest is not None else 0


class ParameterCache:
    """Keeps the newest valid snapshot seen on a subscription.

    A background thread feeds :meth:`offer`; readers call
    :meth:`fetch_latest` from any thread.  Because only a strictly newer
    version ever replaces the held one, successive fetches never go back.
    """

    def __init__(self, subscriber: Subscriber | None = None):
        self._lock = threading.Lock()
        self._fresh = threading.Condition(self._lock)
        self._latest: ParameterSnapshot | None = None
        self.received = 0
        self.discarded = 0
        self.stale = 0
        self._subscriber = subscriber
        self._closed = False
        self._thread = None
        if subscriber is not None:
            self._thread = threading.Thread(target=self._receive, daemon=True, name="param-cache")
            self._thread.start()

    @classmethod
    def connect(cls, address: str, **kwargs) -> "ParameterCache":
        return cls(Subscriber.to(address, PARAMS_TOPIC, **kwargs))

    def _receive(self):
        while not self._closed:
            try:
                frame = self._subscriber.recv(timeout=0.2)
            except TimeoutError:
                continue
            except (TransportError, OSError, ValueError):
                return
            self.offer(frame.payload)

    def offer(self, snapshot) -> bool:
        """Consider a snapshot (object or encoded bytes); True if it became the latest."""
        with self._lock:
            self.received += 1
        if not isinstance(snapshot, ParameterSnapshot):
            try:
                snapshot = ParameterSnapshot.decode(snapshot)
            except CorruptSnapshot:
                with self._lock:
                    self.discarded += 1
                return False
        elif not snapshot.verify():
            with self._lock:
                self.discarded += 1
            return False
        with self._lock:
            if self._latest is not None and snapshot.version <= self._latest.version:
                self.stale += 1
                return False
            self._latest = snapshot
            self._fresh.notify_all()
            return True

    @property
    def version(self) -> int | None:
        with self._lock:
            return None if self._latest is None else self._latest.version

    def fetch_latest(self) -> ParameterSnapshot:
        with self._lock:
            if self._latest is None:
                raise NotReady("no parameter snapshot received yet")
            return self._latest

    def wait_for(self, min_version: int = 0, timeout: float | None = None) -> ParameterSnapshot:
        """Block until a snapshot with at least ``min_version`` is held."""
        with self._fresh:
            ok = self._fresh.wait_for(
                lambda: self._latest is not None and self._latest.version >= min_version, timeout
            )
            if not ok:
                raise NotReady(f"no snapshot with version >= {min_version} within {timeout}s")
            return self._latest

    def close(self):
        self._closed = True
        if self._subscriber is not None:
            self._subscriber.close()
        if self._thread is not None:
            self._thread.join(timeout=1.0)
