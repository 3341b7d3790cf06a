"""Choosing a buffer shard for each outgoing batch."""

from __future__ import annotations

import zlib
from collections import defaultdict

ROUND_ROBIN = "round_robin"
HASH = "hash"
POLICIES = (ROUND_ROBIN, HASH)


def stable_hash(producer_id) -> int:
    """Process-independent hash of a producer id (unlike builtin ``hash``)."""
    return zlib.crc32(str(producer_id).encode("utf-8"))


class Router:
    """Maps producers to shard indices.

    Round-robin keeps one counter per producer, so each producer spreads
    its own sends evenly.  The hash policy pins a producer to one shard.
    """

    def __init__(self, shards: int, policy: str = ROUND_ROBIN):
        if shards < 1:
            raise ValueError("need at least one shard")
        if policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
        self.shards = shards
        self.policy = policy
        self._counters: dict = defaultdict(int)

    def route(self, producer_id) -> int:
        if self.policy == HASH:
            return stable_hash(producer_id) % self.shards
        k = self._counters[producer_id]
        self._counters[producer_id] = k + 1
        return k % self.shards


def route(producer_id, shards: int, policy: str = HASH, counter: int = 0) -> int:
    """Stateless form: the hash policy, or round-robin given the producer's send count."""
    if shards < 1:
        raise ValueError("need at least one shard")
    if policy == HASH:
        return stable_hash(producer_id) % shards
    if policy == ROUND_ROBIN:
        return counter % shards
    raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
