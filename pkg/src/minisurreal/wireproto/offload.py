"""Serialization offload pipeline.

Background workers pull frames from a :class:`~.transport.Puller`, decode
them and hand the results to the consumer through a bounded queue in arrival
order.  The consumer thread only ever dequeues finished values.

Decoding normally runs on the worker threads.  With ``processes=True``
each worker thread hands its payload to a process pool instead, which
helps when decoding is interpreter-bound (many small values) rather than
a few large memory copies.
"""

from __future__ import annotations

import os
import multiprocessing as mp
import queue
import threading
import time
from concurrent.futures import ProcessPoolExecutor

from .codec import deserialize
from .errors import PipelineBroken, TransportError
from .transport import ChannelEndpoint, Puller, parse_address

DEFAULT_WORKERS = 2
WORKERS_ENV = "SURREAL_PROTO_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return DEFAULT_WORKERS
    n = int(raw)
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1, got {raw!r}")
    return n


class OffloadFetcher:
    """Single-consumer handle over a pool of pull-and-decode workers.

    ``decode`` maps a frame payload to the value handed to :meth:`take`;
    it defaults to the wire codec's ``deserialize``.  In process mode it
    must be picklable (a module-level function).
    """

    def __init__(self, puller: Puller, queue_capacity: int, *, workers: int | None = None,
                 decode=deserialize, owns_puller: bool = False, processes: bool = False):
        if queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        self.puller = puller
        self.capacity = queue_capacity
        self.decode = decode
        self._owns_puller = owns_puller
        self._queue: queue.Queue = queue.Queue(maxsize=queue_capacity)
        self._turn = threading.Condition()
        self._next = 0
        self._stop = threading.Event()
        self._error: BaseException | None = None
        self.decoded = 0
        self.taken = 0
        n = default_workers() if workers is None else workers
        if n < 1:
            raise ValueError("workers must be >= 1")
        self._pool = ProcessPoolExecutor(n, mp_context=mp.get_context("spawn")) if processes else None
        self._threads = [
            threading.Thread(target=self._work, name=f"offload-{i}", daemon=True) for i in range(n)
        ]
        for t in self._threads:
            t.start()

    @property
    def address(self) -> str:
        return self.puller.address

    @property
    def workers(self) -> int:
        return len(self._threads)

    def _fail(self, exc: BaseException):
        if self._error is None:
            self._error = exc
        self._stop.set()
        with self._turn:
            self._turn.notify_all()

    def _work(self):
        try:
            while not self._stop.is_set():
                try:
                    seq, frame = self.puller.pull_numbered(timeout=0.1)
                except TimeoutError:
                    continue
                except TransportError:
                    if self._stop.is_set():
                        return
                    raise
                if self._pool is None:
                    value = self.decode(frame.payload)
                else:
                    value = self._pool.submit(self.decode, bytes(frame.payload)).result()
                with self._turn:
                    while self._next != seq and not self._stop.is_set():
                        self._turn.wait(0.1)
                    while not self._stop.is_set():
                        try:
                            self._queue.put(value, timeout=0.1)
                            break
                        except queue.Full:
                            continue
                    self.decoded += 1
                    self._next += 1
                    self._turn.notify_all()
        except BaseException as exc:  # noqa: BLE001 - surfaced on take()
            self._fail(exc)

    def take(self, timeout: float | None = None):
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            if self._error is not None:
                raise PipelineBroken(f"offload worker died: {self._error!r}") from self._error
            if self._stop.is_set():
                raise PipelineBroken("fetcher closed")
            wait = 0.05 if deadline is None else min(0.05, deadline - time.monotonic())
            if wait <= 0:
                raise TimeoutError("take timed out")
            try:
                value = self._queue.get(timeout=wait)
            except queue.Empty:
                continue
            self.taken += 1
            return value

    def qsize(self) -> int:
        return self._queue.qsize()

    def close(self):
        self._stop.set()
        with self._turn:
            self._turn.notify_all()
        for t in self._threads:
            t.join(timeout=1.0)
        if self._pool is not None:
            self._pool.shutdown(wait=False, cancel_futures=True)
        if self._owns_puller:
            self.puller.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def spawn_offload_fetcher(endpoint, queue_capacity: int, *, workers: int | None = None, decode=deserialize,
                          processes: bool = False) -> OffloadFetcher:
    """Start an offload pipeline on ``endpoint``.

    ``endpoint`` may be an existing :class:`Puller`, a binder
    :class:`ChannelEndpoint`, or a ``"host:port"`` string to bind.
    """
    if isinstance(endpoint, Puller):
        return OffloadFetcher(endpoint, queue_capacity, workers=workers, decode=decode, processes=processes)
    if isinstance(endpoint, ChannelEndpoint):
        host, port = endpoint.host, endpoint.port
    else:
        host, port = parse_address(endpoint)
    puller = Puller(host, port)
    return OffloadFetcher(puller, queue_capacity, workers=workers, decode=decode, owns_puller=True,
                          processes=processes)
