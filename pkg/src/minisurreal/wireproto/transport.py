"""TCP channels: push-pull with backpressure and publish-subscribe with drop-oldest.

Push-pull: the puller binds, any number of pushers connect.  Every frame is
acknowledged by the puller once it has been read off the socket, and
:meth:`Pusher.push` returns only after that acknowledgement, so a puller
that stops pulling stalls its pushers instead of losing frames.

Publish-subscribe: the publisher binds, subscribers connect and register a
topic prefix and a buffer size.  Each subscriber has a bounded queue on the
publisher side; when it is full the oldest queued frame is dropped and the
subscriber's drop counter incremented.
"""

from __future__ import annotations

import collections
import itertools
import random
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass

from .codec import deserialize, serialize
from .errors import CodecError, FrameError, TransportError
from .frame import Frame, MsgKind, check_header, frame_bytes

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")

ACK_TOPIC = b"ack"
SUBSCRIBE_TOPIC = b"sub"
SUBSCRIBED_TOPIC = b"subscribed"
_ACK_BYTES = frame_bytes(Frame(MsgKind.CONTROL, ACK_TOPIC))

PUSH_PULL = "push_pull"
PUB_SUB = "pub_sub"
BINDER = "binder"
CONNECTOR = "connector"


@dataclass(frozen=True)
class ChannelEndpoint:
    role: str
    pattern: str
    host: str
    port: int

    def __post_init__(self):
        if self.role not in (BINDER, CONNECTOR):
            raise ValueError(f"role must be {BINDER!r} or {CONNECTOR!r}, got {self.role!r}")
        if self.pattern not in (PUSH_PULL, PUB_SUB):
            raise ValueError(f"pattern must be {PUSH_PULL!r} or {PUB_SUB!r}, got {self.pattern!r}")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected host:port, got {address!r}")
    port = int(port)
    if not 0 <= port <= 65535:
        raise ValueError(f"port out of range in {address!r}")
    return host, port


@dataclass
class Backoff:
    """Exponential reconnect schedule with multiplicative jitter."""

    base: float = 0.1
    cap: float = 5.0
    jitter: float = 0.2

    def delay(self, attempt: int) -> float:
        d = min(self.cap, self.base * (2 ** attempt))
        return d * random.uniform(1 - self.jitter, 1 + self.jitter)


def _recv_exact(sock: socket.socket, n: int) -> bytearray:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            raise TransportError("connection closed by peer")
        got += k
    return buf


def read_frame(sock: socket.socket) -> Frame:
    try:
        head = _recv_exact(sock, 7)
        kind = check_header(head)
        (tlen,) = _U16.unpack_from(head, 5)
        rest = _recv_exact(sock, tlen + 4)
        (plen,) = _U32.unpack_from(rest, tlen)
        payload = _recv_exact(sock, plen) if plen else b""
    except OSError as exc:
        raise TransportError(f"read failed: {exc}") from exc
    return Frame(kind, bytes(rest[:tlen]), payload)


def _connect(host: str, port: int, retries: int, backoff: Backoff, timeout: float) -> socket.socket:
    attempt = 0
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            if attempt >= retries:
                raise TransportError(
                    f"cannot connect to {host}:{port}: {exc}", retry_after=backoff.delay(attempt)
                ) from exc
            time.sleep(backoff.delay(attempt))
            attempt += 1
            continue
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return sock


def _listen(host: str, port: int, backlog: int = 128) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        raise TransportError(f"cannot bind {host}:{port}: {exc}") from exc
    sock.listen(backlog)
    return sock


class _Binder:
    def __init__(self, host: str, port: int):
        self._listener = _listen(host, port)
        self.host, self.port = self._listener.getsockname()[:2]
        self._closed = False
        self._accept_thread = threading.Thread(target=self._accept_loop, name=f"{type(self).__name__}-accept", daemon=True)

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._on_connection(conn)

    def _on_connection(self, conn):
        raise NotImplementedError

    def close(self):
        self._closed = True
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._listener.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Puller(_Binder):
    """Bind side of push-pull.

    ``pull`` is safe to call from several threads; each connection is read
    by at most one thread at a time, so frames of a single pusher come out
    in send order.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self._cond = threading.Condition()
        self._idle: list[socket.socket] = []
        self._busy: set[socket.socket] = set()
        self._seq = 0
        self.received = 0
        self._accept_thread.start()

    def _on_connection(self, conn):
        with self._cond:
            self._idle.append(conn)
            self._cond.notify_all()

    @property
    def connections(self) -> int:
        with self._cond:
            return len(self._idle) + len(self._busy)

    def _claim(self, deadline):
        while True:
            if self._closed:
                raise TransportError("puller closed")
            with self._cond:
                conns = list(self._idle)
                if not conns:
                    wait = 0.05 if deadline is None else min(0.05, deadline - time.monotonic())
                    if wait <= 0:
                        raise TimeoutError("pull timed out")
                    self._cond.wait(wait)
                    continue
            wait = 0.05 if deadline is None else min(0.05, deadline - time.monotonic())
            if wait <= 0:
                raise TimeoutError("pull timed out")
            try:
                ready, _, _ = select.select(conns, [], [], wait)
            except (OSError, ValueError):
                ready = []
                self._prune()
            with self._cond:
                for conn in ready:
                    if conn in self._idle:
                        self._idle.remove(conn)
                        self._busy.add(conn)
                        return conn

    def _prune(self):
        with self._cond:
            self._idle = [c for c in self._idle if c.fileno() >= 0]

    def _release(self, conn, alive: bool):
        with self._cond:
            self._busy.discard(conn)
            if alive and not self._closed:
                self._idle.append(conn)
                self._cond.notify_all()
        if not alive:
            conn.close()

    def pull_numbered(self, timeout: float | None = None) -> tuple[int, Frame]:
        """Pull a frame along with its arrival sequence number.

        Sequence numbers are assigned when a frame has been fully read, so
        for any single pusher they increase in send order.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            conn = self._claim(deadline)
            try:
                frame = read_frame(conn)
            except (TransportError, FrameError):
                self._release(conn, alive=False)
                continue
            with self._cond:
                seq = self._seq
                self._seq += 1
                self.received += 1
            alive = True
            try:
                conn.sendall(_ACK_BYTES)
            except OSError:
                alive = False
            self._release(conn, alive)
            return seq, frame

    def pull(self, timeout: float | None = None) -> Frame:
        return self.pull_numbered(timeout)[1]

    def close(self):
        super().close()
        with self._cond:
            conns = self._idle + list(self._busy)
            self._idle = []
            self._cond.notify_all()
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()


class Pusher:
    """Connect side of push-pull.  Thread-safe; writes are serialized."""

    def __init__(self, host: str, port: int, *, retries: int = 0, backoff: Backoff | None = None, connect_timeout: float = 5.0):
        self.host, self.port = host, port
        self._backoff = backoff or Backoff()
        self._lock = threading.Lock()
        self._sock = _connect(host, port, retries, self._backoff, connect_timeout)
        self._pending = 0
        self.acked = 0

    @classmethod
    def to(cls, address: str, **kwargs) -> "Pusher":
        return cls(*parse_address(address), **kwargs)

    def _await_ack(self, timeout):
        self._sock.settimeout(timeout)
        try:
            frame = read_frame(self._sock)
        except TransportError as exc:
            if isinstance(exc.__cause__, socket.timeout):
                raise TimeoutError("no acknowledgement from puller") from None
            raise
        finally:
            if self._sock.fileno() >= 0:
                self._sock.settimeout(None)
        if frame.kind != MsgKind.CONTROL or frame.topic != ACK_TOPIC:
            raise TransportError(f"expected ack, got {frame.kind.name} {frame.topic!r}")
        self._pending -= 1
        self.acked += 1

    def push(self, frame: Frame, timeout: float | None = None) -> int:
        """Send ``frame`` and block until the puller acknowledges it.

        Returns the running count of acknowledged frames.  Raises
        ``TimeoutError`` if ``timeout`` expires while waiting; the frame is
        still in flight and its acknowledgement is collected by the next
        call.
        """
        return self.push_bytes(frame_bytes(frame), timeout)

    def push_bytes(self, data: bytes, timeout: float | None = None) -> int:
        with self._lock:
            if self._sock.fileno() < 0:
                raise TransportError("pusher closed")
            while self._pending:
                self._await_ack(timeout)
            try:
                self._sock.sendall(data)
            except OSError as exc:
                raise TransportError(f"send to {self.host}:{self.port} failed: {exc}") from exc
            self._pending += 1
            self._await_ack(timeout)
            return self.acked

    def push_value(self, value, kind=MsgKind.DATA, topic: bytes = b"", timeout: float | None = None) -> int:
        return self.push(Frame(MsgKind(kind), topic, serialize(value)), timeout)

    def close(self):
        with self._lock:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Slot:
    def __init__(self, ident, conn, topic, capacity):
        self.id = ident
        self.conn = conn
        self.topic = topic
        self.capacity = capacity
        self.queue = collections.deque()
        self.cond = threading.Condition()
        self.sent = 0
        self.dropped = 0
        self.alive = True


class Publisher(_Binder):
    """Bind side of publish-subscribe.  Publishing never blocks."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, *, default_buffer: int = 64):
        super().__init__(host, port)
        self.default_buffer = default_buffer
        self._lock = threading.Lock()
        self._slots: list[_Slot] = []
        self._ids = itertools.count()
        self.published = 0
        self._accept_thread.start()

    def _on_connection(self, conn):
        conn.settimeout(5.0)
        try:
            frame = read_frame(conn)
            if frame.kind != MsgKind.CONTROL or frame.topic != SUBSCRIBE_TOPIC:
                raise TransportError("expected subscribe request")
            req = deserialize(frame.payload)
            topic = req.get("topic", b"")
            capacity = int(req.get("buffer") or self.default_buffer)
            if capacity < 1:
                raise TransportError("subscriber buffer must be >= 1")
        except (TransportError, CodecError, FrameError, AttributeError, OSError):
            conn.close()
            return
        conn.settimeout(None)
        slot = _Slot(next(self._ids), conn, bytes(topic), capacity)
        with self._lock:
            self._slots.append(slot)
        # registered before the ack so nothing published after the ack is missed;
        # the writer starts after the ack so the ack precedes any data
        try:
            conn.sendall(frame_bytes(Frame(MsgKind.CONTROL, SUBSCRIBED_TOPIC)))
        except OSError:
            with self._lock:
                self._slots.remove(slot)
            conn.close()
            return
        threading.Thread(target=self._writer, args=(slot,), name=f"pub-writer-{slot.id}", daemon=True).start()

    def _writer(self, slot: _Slot):
        while True:
            with slot.cond:
                while not slot.queue and slot.alive:
                    slot.cond.wait()
                if not slot.alive:
                    break
                data = slot.queue.popleft()
            try:
                slot.conn.sendall(data)
            except OSError:
                break
            slot.sent += 1
        slot.alive = False
        with self._lock:
            if slot in self._slots:
                self._slots.remove(slot)
        slot.conn.close()

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._slots)

    def wait_for_subscribers(self, n: int, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        while self.subscriber_count < n:
            if time.monotonic() > deadline:
                return False
            time.sleep(0.01)
        return True

    def publish(self, frame: Frame) -> int:
        """Queue ``frame`` for every subscriber whose topic prefixes ``frame.topic``.

        Returns the number of subscribers the frame was queued for.
        """
        data = frame_bytes(frame)
        with self._lock:
            slots = [s for s in self._slots if frame.topic.startswith(s.topic)]
            self.published += 1
        for slot in slots:
            with slot.cond:
                if len(slot.queue) >= slot.capacity:
                    slot.queue.popleft()
                    slot.dropped += 1
                slot.queue.append(data)
                slot.cond.notify()
        return len(slots)

    def publish_value(self, topic: bytes, value, kind=MsgKind.DATA) -> int:
        return self.publish(Frame(MsgKind(kind), topic, serialize(value)))

    def stats(self) -> list[dict]:
        with self._lock:
            slots = list(self._slots)
        return [
            {"id": s.id, "topic": s.topic, "sent": s.sent, "dropped": s.dropped, "queued": len(s.queue)}
            for s in slots
        ]

    def close(self):
        super().close()
        with self._lock:
            slots = list(self._slots)
        for slot in slots:
            with slot.cond:
                slot.alive = False
                slot.cond.notify()
            try:
                slot.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass


class Subscriber:
    """Connect side of publish-subscribe.

    The constructor returns once the publisher has registered the
    subscription, so every frame published afterwards is eligible for
    delivery.
    """

    def __init__(self, host: str, port: int, topic: bytes = b"", *, buffer: int = 64, retries: int = 0,
                 backoff: Backoff | None = None, timeout: float = 5.0):
        if isinstance(topic, str):
            topic = topic.encode("utf-8")
        self.topic = topic
        self.received = 0
        self._sock = _connect(host, port, retries, backoff or Backoff(), timeout)
        req = serialize({"topic": topic, "buffer": int(buffer)})
        try:
            self._sock.sendall(frame_bytes(Frame(MsgKind.CONTROL, SUBSCRIBE_TOPIC, req)))
            self._sock.settimeout(timeout)
            reply = read_frame(self._sock)
        except (OSError, TransportError) as exc:
            self._sock.close()
            raise TransportError(f"subscribe to {host}:{port} failed: {exc}") from exc
        self._sock.settimeout(None)
        if reply.kind != MsgKind.CONTROL or reply.topic != SUBSCRIBED_TOPIC:
            self._sock.close()
            raise TransportError("publisher did not acknowledge subscription")

    @classmethod
    def to(cls, address: str, topic: bytes = b"", **kwargs) -> "Subscriber":
        return cls(*parse_address(address), topic, **kwargs)

    def recv(self, timeout: float | None = None) -> Frame:
        if timeout is not None:
            ready, _, _ = select.select([self._sock], [], [], max(timeout, 0))
            if not ready:
                raise TimeoutError("no frame within timeout")
        frame = read_frame(self._sock)
        self.received += 1
        return frame

    def __iter__(self):
        while True:
            try:
                yield self.recv()
            except TransportError:
                return

    def fileno(self) -> int:
        return self._sock.fileno()

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
