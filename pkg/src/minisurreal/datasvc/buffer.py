"""Experience batches and the in-memory buffer shard."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any

import numpy as np

FIFO = "fifo"
UNIFORM = "uniform"
MODES = (FIFO, UNIFORM)


class ShardClosed(RuntimeError):
    """The shard is shutting down and rejects new inserts."""


class ShardFull(TimeoutError):
    """A fifo shard stayed full for the whole insert timeout."""


class SampleTimeout(TimeoutError):
    """Not enough contents arrived before the sampling deadline."""


class SequenceError(ValueError):
    """A producer sent a sequence number that does not increase."""


@dataclass(frozen=True)
class ExperienceBatch:
    producer_id: str
    sequence: int
    data: Any

    def to_value(self) -> dict:
        return {"producer": self.producer_id, "seq": self.sequence, "data": self.data}

    @classmethod
    def from_value(cls, value) -> "ExperienceBatch":
        try:
            return cls(str(value["producer"]), int(value["seq"]), value["data"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"not an experience batch: {exc}") from None


class BufferShard:
    """Bounded store of experience, either fifo or uniform-sampling.

    Contents live in a ring so uniform sampling indexes in O(1).  In
    uniform mode a full shard overwrites its oldest entry; in fifo mode
    ``insert`` waits for a consumer instead, since on-policy data must not
    be silently lost.
    """

    def __init__(self, mode: str = FIFO, capacity: int = 1024):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.mode = mode
        self.capacity = int(capacity)
        self._ring: list = [None] * self.capacity
        self._head = 0
        self._size = 0
        self._cond = threading.Condition()
        self._last_seq: dict[str, int] = {}
        self.ingest_counter = 0
        self.eviction_counter = 0
        self.closed = False

    def __len__(self):
        return self._size

    @property
    def accepting(self) -> bool:
        return not self.closed and (self.mode == UNIFORM or self._size < self.capacity)

    def contents(self) -> list:
        """Snapshot of the stored items, oldest first."""
        with self._cond:
            return [self._ring[(self._head + i) % self.capacity] for i in range(self._size)]

    def _check_sequence(self, item):
        producer = getattr(item, "producer_id", None)
        if producer is None:
            return
        last = self._last_seq.get(producer)
        if last is not None and item.sequence <= last:
            raise SequenceError(f"producer {producer}: sequence {item.sequence} after {last}")
        self._last_seq[producer] = item.sequence

    def insert(self, item, timeout: float | None = None) -> int:
        """Store ``item`` and return the new ingest count."""
        with self._cond:
            if self.closed:
                raise ShardClosed("shard is shutting down")
            if self.mode == FIFO and self._size >= self.capacity:
                if not self._cond.wait_for(lambda: self.closed or self._size < self.capacity, timeout):
                    raise ShardFull(f"fifo shard full ({self.capacity})")
                if self.closed:
                    raise ShardClosed("shard is shutting down")
            self._check_sequence(item)
            if self._size == self.capacity:
                self._ring[self._head] = item
                self._head = (self._head + 1) % self.capacity
                self.eviction_counter += 1
            else:
                self._ring[(self._head + self._size) % self.capacity] = item
                self._size += 1
            self.ingest_counter += 1
            self._cond.notify_all()
            return self.ingest_counter

    def _pop(self, n: int) -> list:
        out = []
        for _ in range(n):
            out.append(self._ring[self._head])
            self._ring[self._head] = None
            self._head = (self._head + 1) % self.capacity
            self._size -= 1
        self._cond.notify_all()
        return out

    def pop_available(self, n: int) -> list:
        """Remove and return up to ``n`` of the oldest items without waiting."""
        with self._cond:
            return self._pop(min(n, self._size))

    def sample_fifo(self, n: int, timeout: float | None = None) -> list:
        """Remove and return the oldest ``n`` items, waiting until they exist."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n > self.capacity:
            raise ValueError(f"cannot take {n} items from a shard of capacity {self.capacity}")
        with self._cond:
            if not self._cond.wait_for(lambda: self._size >= n or self.closed, timeout):
                raise SampleTimeout(f"only {self._size} of {n} items available")
            if self._size < n:
                raise SampleTimeout("shard closed before enough items arrived")
            return self._pop(n)

    def sample_uniform(self, n: int, seed=None) -> list:
        """Draw ``n`` items uniformly with replacement; contents are unchanged."""
        with self._cond:
            if self._size == 0:
                raise SampleTimeout("uniform sampling from an empty shard")
            idx = np.random.default_rng(seed).integers(0, self._size, size=n)
            return [self._ring[(self._head + int(i)) % self.capacity] for i in idx]

    def stats(self) -> dict:
        with self._cond:
            return {
                "mode": self.mode,
                "capacity": self.capacity,
                "size": self._size,
                "ingest": self.ingest_counter,
                "evictions": self.eviction_counter,
            }

    def close(self):
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def wait_nonfull(self, timeout: float) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self.accepting or self.closed, timeout)


