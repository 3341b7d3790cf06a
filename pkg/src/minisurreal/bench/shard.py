"""Aggregate ingest of sharded replay under saturating producers."""

from __future__ import annotations

import sys
import time

from ..datasvc import Mailbox, ShardClient, request_service
from ..orchestra import ExperimentSpec, Registry
from ..wireproto import Puller
from .common import launch, role_cmd, unique_name, wait_all


def replay_service(k: int) -> str:
    return f"replay-{k}"


def measure_shards(shards: int, producers: int = 8, duration: float = 4.0, batch_floats: int = 4096,
                   capacity: int = 100_000, warmup: float = 3.0, registry: Registry | None = None) -> dict:
    """Ingest rate summed over ``shards`` uniform buffers fed by ``producers`` processes.

    The rate is the change in the shards' ingest counters across a window
    that starts one second after the producers do, so connection setup
    and queue filling are excluded.
    """
    exp = ExperimentSpec(unique_name(f"bench-shard-{shards}"))
    services = [replay_service(k) for k in range(shards)]
    for s in services:
        exp.new_process(s, [sys.executable, "-m", "minisurreal.datasvc", "shard", "--service", s,
                            "--mode", "uniform", "--capacity", str(capacity)]).bind(s, request_service(s))
    start = time.time() + warmup + 0.1 * producers
    names = []
    for i in range(producers):
        names.append(f"producer-{i}")
        exp.new_process(names[-1], role_cmd("producer", shards=shards, start=start, duration=duration,
                                            batch_floats=batch_floats)).connect(*services)
    with launch(exp, registry) as handle:
        table = handle.registry.read_state(exp.name)["addresses"]
        mailbox = Mailbox(Puller())
        clients = [ShardClient("%s:%d" % tuple(table[request_service(s)]), mailbox) for s in services]
        try:
            settle = 1.0
            time.sleep(max(0.0, start + settle - time.time()))
            t0 = time.monotonic()
            c0 = [c.stats()["ingest"] for c in clients]
            time.sleep(max(0.1, duration - 2 * settle))
            c1 = [c.stats()["ingest"] for c in clients]
            window = time.monotonic() - t0
            sent = wait_all(handle, names, timeout=duration + 60)
            final = [c.stats()["ingest"] for c in clients]
        finally:
            for c in clients:
                c.close()
            mailbox.puller.close()
    per_shard = [(b - a) / window for a, b in zip(c0, c1)]
    return {
        "shards": shards,
        "producers": producers,
        "ingest_per_sec": sum(per_shard),
        "per_shard": per_shard,
        "produced": sum(r["sent"] for r in sent.values()),
        "ingested": sum(final),
    }


def run_shard(shards=(1, 3, 5), registry: Registry | None = None, on_point=None, **kw) -> dict:
    points = []
    for s in shards:
        points.append(measure_shards(s, registry=registry, **kw))
        if on_point is not None:
            on_point(points[-1])
    rates = {p["shards"]: p["ingest_per_sec"] for p in points}
    return {"points": points, "rates": rates}
