"""Network-facing shard and parameter-server loops plus their clients."""

from __future__ import annotations

import itertools
import logging
import queue
import threading
import time

from ..wireproto import (
    CodecError,
    Frame,
    MsgKind,
    Publisher,
    Puller,
    Pusher,
    TransportError,
    deserialize,
    serialize,
    parse_address,
)
from .buffer import BufferShard, ExperienceBatch, SampleTimeout, SequenceError, ShardClosed
from .params import CorruptSnapshot, ParameterPublisher, ParameterSnapshot
from .routing import ROUND_ROBIN, Router

log = logging.getLogger(__name__)

REQUEST_TOPIC = b"request"
REPLY_TOPIC = b"reply"


def request_service(shard_service: str) -> str:
    """Name of the request channel that accompanies a shard's data channel."""
    return f"{shard_service}-req"


class ShardService:
    """Single-writer loop that owns a :class:`BufferShard`.

    Experience arrives on ``data_puller``.  Requests (sampling, stats)
    arrive either on ``request_puller`` or through :meth:`call`, and are
    queued so that only the loop thread ever touches the shard.  The loop
    stops pulling while a fifo shard is full, which stalls producers
    through the channel's acknowledgements.
    """

    def __init__(self, shard: BufferShard, data_puller: Puller, request_puller: Puller | None = None,
                 poll: float = 0.01):
        self.shard = shard
        self.data = data_puller
        self.requests_in = request_puller
        self.poll = poll
        self.rejected = 0
        self._queue: queue.Queue = queue.Queue()
        self._pending: list = []
        self._repliers: dict[str, Pusher] = {}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- request plumbing ------------------------------------------------------

    def _forward_requests(self):
        while not self._stop.is_set():
            try:
                frame = self.requests_in.pull(timeout=0.2)
            except TimeoutError:
                continue
            except TransportError:
                return
            try:
                req = deserialize(frame.payload)
            except CodecError:
                self.rejected += 1
                continue
            self._queue.put((req, self._remote_reply(req.get("reply_to"))))

    def _remote_reply(self, address):
        def reply(msg):
            if not address:
                return
            pusher = self._repliers.get(address)
            try:
                if pusher is None:
                    pusher = self._repliers[address] = Pusher.to(address, retries=3)
                pusher.push(Frame(MsgKind.CONTROL, REPLY_TOPIC, serialize(msg)), timeout=30.0)
            except (TransportError, TimeoutError) as exc:
                log.warning("reply to %s failed: %s", address, exc)
                self._repliers.pop(address, None)
        return reply

    def call(self, op: str, timeout: float = 10.0, **kwargs) -> dict:
        """Run a request through the loop from another thread and wait for the reply."""
        box: queue.Queue = queue.Queue(maxsize=1)
        self._queue.put(({"op": op, "id": 0, **kwargs}, box.put))
        return box.get(timeout=timeout)

    # -- loop ------------------------------------------------------------------

    def _handle(self, req: dict, reply):
        op = req.get("op")
        rid = req.get("id", 0)
        shard = self.shard
        if op == "stats":
            reply({"id": rid, "status": "ok", "stats": {**shard.stats(), "rejected": self.rejected}})
        elif op == "sample_uniform":
            try:
                items = shard.sample_uniform(int(req["n"]), req.get("seed"))
                reply({"id": rid, "status": "ok", "items": [b.to_value() for b in items]})
            except SampleTimeout:
                reply({"id": rid, "status": "empty", "items": []})
        elif op == "drain":
            items = shard.pop_available(int(req["n"]))
            reply({"id": rid, "status": "ok", "items": [b.to_value() for b in items]})
        elif op == "sample_fifo":
            n = int(req["n"])
            if n > shard.capacity:
                reply({"id": rid, "status": "error", "reason": f"n={n} exceeds capacity"})
                return
            deadline = time.monotonic() + float(req.get("wait", 10.0))
            self._pending.append((deadline, n, rid, reply))
        else:
            reply({"id": rid, "status": "error", "reason": f"unknown op {op!r}"})

    def _serve_pending(self):
        now = time.monotonic()
        while self._pending:
            deadline, n, rid, reply = self._pending[0]
            if len(self.shard) >= n:
                self._pending.pop(0)
                reply({"id": rid, "status": "ok", "items": [b.to_value() for b in self.shard.pop_available(n)]})
            elif now >= deadline:
                self._pending.pop(0)
                reply({"id": rid, "status": "timeout", "items": []})
            else:
                break

    def _ingest(self, frame: Frame):
        try:
            batch = ExperienceBatch.from_value(deserialize(frame.payload))
            self.shard.insert(batch, timeout=0)
        except (CodecError, ValueError, SequenceError, ShardClosed, TimeoutError):
            self.rejected += 1

    def step(self):
        """One loop iteration: requests first, then at most one insert."""
        while True:
            try:
                req, reply = self._queue.get_nowait()
            except queue.Empty:
                break
            self._handle(req, reply)
        self._serve_pending()
        if self.shard.accepting:
            try:
                frame = self.data.pull(timeout=self.poll)
            except TimeoutError:
                return
            self._ingest(frame)
            self._serve_pending()
        else:
            try:
                req, reply = self._queue.get(timeout=self.poll)
            except queue.Empty:
                return
            self._handle(req, reply)

    def run(self):
        if self.requests_in is not None:
            t = threading.Thread(target=self._forward_requests, daemon=True, name="shard-requests")
            t.start()
            self._threads.append(t)
        try:
            while not self._stop.is_set():
                try:
                    self.step()
                except TransportError:
                    if self._stop.is_set():
                        break
                    raise
        finally:
            for pusher in self._repliers.values():
                pusher.close()

    def start(self) -> "ShardService":
        t = threading.Thread(target=self.run, daemon=True, name="shard-loop")
        t.start()
        self._threads.append(t)
        return self

    def stop(self):
        self._stop.set()
        self.shard.close()
        self.data.close()
        if self.requests_in is not None:
            self.requests_in.close()
        for t in self._threads:
            t.join(timeout=2.0)


class Mailbox:
    """Collects request replies arriving on one puller, keyed by request id."""

    def __init__(self, puller: Puller):
        self.puller = puller
        self._ids = itertools.count(1)
        self._held: dict[int, dict] = {}

    @property
    def address(self) -> str:
        return self.puller.address

    def next_id(self) -> int:
        return next(self._ids)

    def wait(self, rid: int, timeout: float) -> dict:
        deadline = time.monotonic() + timeout
        while rid not in self._held:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError(f"no reply to request {rid}")
            frame = self.puller.pull(timeout=remaining)
            try:
                msg = deserialize(frame.payload)
                self._held[int(msg["id"])] = msg
            except (CodecError, KeyError, TypeError, ValueError):
                continue
        return self._held.pop(rid)


class ShardClient:
    """Talks to a remote shard's request channel."""

    def __init__(self, request_address: str, mailbox: Mailbox):
        self.address = request_address
        self.mailbox = mailbox
        self._pusher = Pusher.to(request_address, retries=20)

    def send(self, op: str, **kwargs) -> int:
        rid = self.mailbox.next_id()
        self._pusher.push(Frame(MsgKind.CONTROL, REQUEST_TOPIC,
                                serialize({"op": op, "id": rid, "reply_to": self.mailbox.address, **kwargs})))
        return rid

    def request(self, op: str, timeout: float = 30.0, **kwargs) -> dict:
        return self.mailbox.wait(self.send(op, **kwargs), timeout)

    def stats(self) -> dict:
        return self.request("stats")["stats"]

    def sample_fifo(self, n: int, timeout: float = 10.0) -> list[ExperienceBatch]:
        reply = self.request("sample_fifo", timeout=timeout + 30.0, n=n, wait=timeout)
        return [ExperienceBatch.from_value(v) for v in reply["items"]]

    def close(self):
        self._pusher.close()


class ExperienceProducer:
    """Client side of experience ingestion with shard failover.

    Sequence numbers increase on every send, whichever shard takes it.
    A shard that refuses a connection is skipped from then on.
    """

    def __init__(self, producer_id: str, addresses: list[str], policy: str = ROUND_ROBIN, retries: int = 20):
        if not addresses:
            raise ValueError("need at least one shard address")
        self.producer_id = str(producer_id)
        self.addresses = list(addresses)
        self.router = Router(len(addresses), policy)
        self.retries = retries
        self.sequence = 0
        self.sent = [0] * len(addresses)
        self._pushers: dict[int, Pusher] = {}
        self._dead: set[int] = set()

    def _pusher(self, k: int) -> Pusher:
        if k not in self._pushers:
            self._pushers[k] = Pusher.to(self.addresses[k], retries=self.retries)
        return self._pushers[k]

    def send(self, data, timeout: float | None = None) -> int:
        """Push one batch; returns the index of the shard that accepted it."""
        self.sequence += 1
        payload = serialize(ExperienceBatch(self.producer_id, self.sequence, data).to_value())
        frame = Frame(MsgKind.DATA, b"exp", payload)
        first = self.router.route(self.producer_id)
        n = len(self.addresses)
        for k in [(first + i) % n for i in range(n)]:
            if k in self._dead:
                continue
            try:
                self._pusher(k).push(frame, timeout)
            except TransportError as exc:
                log.warning("shard %s unavailable: %s", self.addresses[k], exc)
                self._dead.add(k)
                if k in self._pushers:
                    self._pushers.pop(k).close()
                continue
            self.sent[k] += 1
            return k
        raise TransportError("no buffer shard accepted the batch")

    def close(self):
        for p in self._pushers.values():
            p.close()
        self._pushers.clear()


class ParameterServer:
    """Relays snapshots from the learner to subscribers.

    Snapshots arrive by push on ``inbound`` and leave on ``publisher``.
    The newest one is re-broadcast every ``republish`` seconds because
    subscribers that join late see nothing published before they joined.
    """

    def __init__(self, inbound: Puller, publisher: Publisher, republish: float = 0.5):
        self.inbound = inbound
        self.out = ParameterPublisher(publisher)
        self.republish = republish
        self.rejected = 0
        self._stop = threading.Event()
        self._thread = None

    def step(self, timeout: float):
        try:
            frame = self.inbound.pull(timeout=timeout)
        except TimeoutError:
            return
        try:
            snap = ParameterSnapshot.decode(frame.payload)
        except CorruptSnapshot:
            self.rejected += 1
            return
        if self.out.version is not None and snap.version <= self.out.version:
            self.rejected += 1
            return
        self.out.publish_frame(Frame(MsgKind.PARAMS, frame.topic or b"params", frame.payload), snap.version)

    def run(self):
        last = time.monotonic()
        while not self._stop.is_set():
            try:
                self.step(timeout=self.republish / 2)
            except TransportError:
                if self._stop.is_set():
                    break
                raise
            if time.monotonic() - last >= self.republish:
                self.out.republish()
                last = time.monotonic()

    def start(self) -> "ParameterServer":
        self._thread = threading.Thread(target=self.run, daemon=True, name="param-server")
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        self.inbound.close()
        self.out.publisher.close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

