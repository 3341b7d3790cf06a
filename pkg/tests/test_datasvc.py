import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minisurreal.datasvc import (
    BufferShard,
    CorruptSnapshot,
    ExperienceBatch,
    ExperienceProducer,
    Mailbox,
    NotReady,
    ParameterCache,
    ParameterPublisher,
    ParameterServer,
    ParameterSnapshot,
    Router,
    SampleTimeout,
    SequenceError,
    ShardClient,
    ShardClosed,
    ShardService,
    route,
)
from minisurreal.wireproto import Frame, MsgKind, Publisher, Puller, Pusher, TransportError


# -- shard ---------------------------------------------------------------------

def test_uniform_evicts_oldest():
    shard = BufferShard("uniform", 2)
    for item in "abc":
        shard.insert(item)
    assert shard.contents() == ["b", "c"]
    assert shard.eviction_counter == 1
    assert shard.ingest_counter == 3


def test_fifo_order():
    shard = BufferShard("fifo", 4)
    shard.insert("a")
    shard.insert("b")
    assert shard.sample_fifo(1) == ["a"]
    assert shard.sample_fifo(1) == ["b"]


def test_concurrent_producers_count():
    shard = BufferShard("uniform", 1000)

    def produce(pid):
        for seq in range(100):
            shard.insert(ExperienceBatch(f"p{pid}", seq, seq))

    threads = [threading.Thread(target=produce, args=(i,)) for i in range(128)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert shard.ingest_counter == 12800
    assert len(shard) == 1000 and shard.eviction_counter == 11800


def test_fifo_blocks_until_items_arrive():
    shard = BufferShard("fifo", 8)
    threading.Timer(0.1, lambda: [shard.insert(i) for i in range(3)]).start()
    assert shard.sample_fifo(3, timeout=5) == [0, 1, 2]


def test_fifo_timeout():
    shard = BufferShard("fifo", 8)
    shard.insert("x")
    with pytest.raises(SampleTimeout):
        shard.sample_fifo(2, timeout=0.05)
    assert len(shard) == 1


def test_fifo_full_waits_for_consumer():
    shard = BufferShard("fifo", 1)
    shard.insert("a")
    with pytest.raises(TimeoutError):
        shard.insert("b", timeout=0.05)
    threading.Timer(0.05, shard.sample_fifo, args=(1,)).start()
    shard.insert("b", timeout=5)
    assert shard.contents() == ["b"]


def test_uniform_single_element():
    shard = BufferShard("uniform", 3)
    shard.insert("only")
    assert shard.sample_uniform(5, seed=1) == ["only"] * 5


def test_uniform_seeded_reproducible_and_nondestructive():
    shard = BufferShard("uniform", 10)
    for i in range(10):
        shard.insert(i)
    assert shard.sample_uniform(50, seed=7) == shard.sample_uniform(50, seed=7)
    assert len(shard) == 10


def test_uniform_frequencies_binomial_bound():
    shard = BufferShard("uniform", 10)
    for item in "abcdefghij":
        shard.insert(item)
    draws = shard.sample_uniform(10000, seed=2024)
    sigma = np.sqrt(10000 * 0.1 * 0.9)
    for item in "abcdefghij":
        assert abs(draws.count(item) - 1000) <= 3 * sigma


def test_uniform_empty():
    with pytest.raises(SampleTimeout):
        BufferShard("uniform", 3).sample_uniform(1)


def test_closed_shard_rejects():
    shard = BufferShard("fifo", 3)
    shard.close()
    with pytest.raises(ShardClosed):
        shard.insert(1)


def test_sequence_must_increase():
    shard = BufferShard("uniform", 10)
    shard.insert(ExperienceBatch("p", 1, None))
    shard.insert(ExperienceBatch("q", 1, None))
    with pytest.raises(SequenceError):
        shard.insert(ExperienceBatch("p", 1, None))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.lists(st.one_of(st.just(None), st.integers(0, 5)), max_size=60))
def test_shard_invariants(capacity, ops):
    # None inserts, k pops up to k items; compare to a plain list model
    shard = BufferShard("fifo", capacity)
    model, counter = [], 0
    for op in ops:
        if op is None:
            if len(model) < capacity:
                shard.insert(counter)
                model.append(counter)
                counter += 1
        else:
            got = shard.pop_available(op)
            assert got == model[:op]
            model = model[op:]
        assert len(shard) <= capacity
        assert shard.contents() == model


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.lists(st.integers(), max_size=40))
def test_uniform_keeps_newest(capacity, items):
    shard = BufferShard("uniform", capacity)
    for x in items:
        shard.insert(x)
    assert shard.contents() == items[-capacity:]
    assert shard.eviction_counter == max(0, len(items) - capacity)


# -- routing -------------------------------------------------------------------

def test_single_shard_route():
    r = Router(1)
    assert {r.route("x") for _ in range(10)} == {0}
    assert route("anything", 1) == 0


def test_round_robin_sequence():
    r = Router(3)
    assert [r.route("actor-0") for _ in range(9)] == [0, 1, 2] * 3


def test_hash_balance():
    loads = np.bincount([route(i, 3, "hash") for i in range(128)], minlength=3)
    assert loads.max() <= 2 * loads.min()


def test_hash_is_stable():
    assert Router(5, "hash").route("actor-3") == Router(5, "hash").route("actor-3")


# -- parameter snapshots -------------------------------------------------------

def snap(v, n=4):
    return ParameterSnapshot.create(v, np.arange(n, dtype=float) + v)


def test_snapshot_roundtrip():
    s = snap(3)
    back = ParameterSnapshot.decode(s.encode())
    assert back.version == 3 and back.checksum == s.checksum
    np.testing.assert_array_equal(back.flat_params, s.flat_params)
    assert 0 <= s.checksum < 2**64


def test_corrupt_payload_detected():
    raw = bytearray(snap(4).encode())
    raw[-20] ^= 0xFF
    with pytest.raises(CorruptSnapshot):
        ParameterSnapshot.decode(bytes(raw))


def test_cache_keeps_highest():
    cache = ParameterCache()
    with pytest.raises(NotReady):
        cache.fetch_latest()
    cache.offer(snap(3))
    cache.offer(snap(2))
    assert cache.fetch_latest().version == 3


def test_cache_discards_corrupt():
    cache = ParameterCache()
    cache.offer(snap(3).encode())
    bad = snap(4)
    forged = ParameterSnapshot(4, bad.flat_params + 1.0, bad.checksum, bad.timestamp)
    assert not cache.offer(forged)
    assert not cache.offer(b"garbage")
    assert cache.fetch_latest().version == 3
    assert cache.discarded == 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=30))
def test_fetches_never_decrease(versions):
    cache = ParameterCache()
    seen = []
    for v in versions:
        cache.offer(snap(v, 2))
        seen.append(cache.fetch_latest().version)
    assert seen == sorted(seen)
    assert seen[-1] == max(versions)


def test_publisher_rejects_old_version():
    with Publisher() as pub:
        out = ParameterPublisher(pub)
        out.publish(snap(2))
        with pytest.raises(ValueError):
            out.publish(snap(2))


def test_slow_subscriber_ends_on_newest():
    with Publisher() as pub:
        from minisurreal.wireproto import Subscriber

        sub = Subscriber.to(pub.address, b"params", buffer=2)
        out = ParameterPublisher(pub)
        for v in range(1, 101):
            out.publish(snap(v))
        cache = ParameterCache(sub)
        try:
            assert cache.wait_for(100, timeout=5).version == 100
            assert sum(s["dropped"] for s in pub.stats()) > 0
        finally:
            cache.close()


def test_parameter_server_relays_and_republishes():
    inbound = Puller()
    server = ParameterServer(inbound, Publisher(), republish=0.1).start()
    try:
        with Pusher.to(inbound.address) as push:
            push.push(Frame(MsgKind.PARAMS, b"params", snap(1).encode()))
            push.push(Frame(MsgKind.PARAMS, b"params", snap(5).encode()))
        # joins after both were published; the periodic rebroadcast catches it up
        time.sleep(0.2)
        cache = ParameterCache.connect(server.out.publisher.address)
        try:
            assert cache.wait_for(5, timeout=5).version == 5
        finally:
            cache.close()
    finally:
        server.stop()


# -- shard service over the network ----------------------------------------------

@pytest.fixture
def service():
    svc = ShardService(BufferShard("fifo", 64), Puller(), Puller()).start()
    yield svc
    svc.stop()


def test_service_ingests_and_serves(service):
    prod = ExperienceProducer("actor-0", [service.data.address])
    for i in range(10):
        prod.send({"i": i})
    mailbox = Mailbox(Puller())
    client = ShardClient(service.requests_in.address, mailbox)
    try:
        items = client.sample_fifo(10, timeout=5)
        assert [b.data["i"] for b in items] == list(range(10))
        assert [b.sequence for b in items] == list(range(1, 11))
        assert client.stats()["ingest"] == 10
    finally:
        client.close()
        prod.close()
        mailbox.puller.close()


def test_service_sample_fifo_timeout(service):
    reply = service.call("sample_fifo", n=3, wait=0.05)
    assert reply["status"] == "timeout" and reply["items"] == []


def test_service_backpressure_when_full():
    svc = ShardService(BufferShard("fifo", 2), Puller()).start()
    try:
        prod = ExperienceProducer("p", [svc.data.address])
        prod.send(1)
        prod.send(2)
        # full shard stops pulling, so the third push waits for its ack
        done = threading.Event()
        threading.Thread(target=lambda: (prod.send(3), done.set()), daemon=True).start()
        assert not done.wait(0.3)
        assert svc.call("drain", n=2)["status"] == "ok"
        assert done.wait(5)
        assert [b.data for b in svc.shard.contents()] == [3]
        prod.close()
    finally:
        svc.stop()


def test_conservation_across_shards():
    services = [ShardService(BufferShard("uniform", 1000), Puller()).start() for _ in range(3)]
    try:
        addrs = [s.data.address for s in services]
        producers = [ExperienceProducer(f"actor-{i}", addrs) for i in range(4)]
        for _ in range(30):
            for p in producers:
                p.send(0.0)
        total = sum(s.call("stats")["stats"]["ingest"] for s in services)
        assert total == 120
        assert [s.call("stats")["stats"]["ingest"] for s in services] == [40, 40, 40]
    finally:
        for s in services:
            s.stop()


def test_producer_fails_over_to_live_shard():
    live = ShardService(BufferShard("uniform", 100), Puller()).start()
    dead = Puller()
    dead_addr = dead.address
    dead.close()
    try:
        prod = ExperienceProducer("p", [dead_addr, live.data.address], retries=0)
        assert [prod.send(i) for i in range(4)] == [1, 1, 1, 1]
        assert live.call("stats")["stats"]["ingest"] == 4
        prod.close()
    finally:
        live.stop()


def test_producer_all_dead():
    dead = Puller()
    addr = dead.address
    dead.close()
    prod = ExperienceProducer("p", [addr], retries=0)
    with pytest.raises(TransportError):
        prod.send(1)
