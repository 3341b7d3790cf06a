import socket
import struct
import threading
import time

import numpy as np
import pytest

from minisurreal.wireproto import (
    Backoff,
    ChannelEndpoint,
    Frame,
    MsgKind,
    Publisher,
    Puller,
    Pusher,
    Subscriber,
    TransportError,
    deserialize,
    parse_address,
    serialize,
)


def tagged(i: int) -> Frame:
    return Frame(MsgKind.DATA, b"t", struct.pack("<I", i))


def tag(frame: Frame) -> int:
    return struct.unpack("<I", frame.payload)[0]


def free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def test_parse_address():
    assert parse_address("127.0.0.1:7001") == ("127.0.0.1", 7001)
    with pytest.raises(ValueError):
        parse_address("nohost")


def test_endpoint_validation():
    ep = ChannelEndpoint("binder", "push_pull", "127.0.0.1", 7000)
    assert ep.address == "127.0.0.1:7000"
    with pytest.raises(ValueError):
        ChannelEndpoint("listener", "push_pull", "h", 1)


def test_backoff_schedule():
    b = Backoff()
    for attempt, nominal in [(0, 0.1), (1, 0.2), (3, 0.8), (10, 5.0)]:
        for _ in range(20):
            d = b.delay(attempt)
            assert 0.8 * nominal <= d <= 1.2 * nominal


def test_single_pusher_fifo():
    with Puller() as puller, Pusher(puller.host, puller.port) as pusher:
        t = threading.Thread(target=lambda: [pusher.push(tagged(i)) for i in range(1, 101)])
        t.start()
        got = [tag(puller.pull(timeout=5)) for _ in range(100)]
        t.join()
    assert got == list(range(1, 101))


def test_push_value_roundtrip():
    with Puller() as puller, Pusher.to(puller.address) as pusher:
        done = threading.Thread(target=pusher.push_value, args=({"x": np.arange(3.0)},))
        done.start()
        frame = puller.pull(timeout=5)
        done.join()
    assert frame.kind == MsgKind.DATA
    assert deserialize(frame.payload)["x"].tolist() == [0.0, 1.0, 2.0]


@pytest.mark.parametrize("n_pushers,per_pusher", [(4, 250), (8, 40)])
def test_many_pushers_conservation_and_order(n_pushers, per_pusher):
    with Puller() as puller:
        def run(pid):
            with Pusher(puller.host, puller.port) as p:
                for i in range(per_pusher):
                    p.push(Frame(MsgKind.DATA, b"", struct.pack("<II", pid, i)))

        threads = [threading.Thread(target=run, args=(k,)) for k in range(n_pushers)]
        for t in threads:
            t.start()
        got = [struct.unpack("<II", puller.pull(timeout=10).payload) for _ in range(n_pushers * per_pusher)]
        for t in threads:
            t.join()
        with pytest.raises(TimeoutError):
            puller.pull(timeout=0.2)
    assert len(got) == n_pushers * per_pusher
    for pid in range(n_pushers):
        assert [i for p, i in got if p == pid] == list(range(per_pusher))


def test_push_to_unbound_port():
    with pytest.raises(TransportError) as info:
        Pusher("127.0.0.1", free_port())
    assert info.value.retry_after is not None and info.value.retry_after > 0


def test_connector_retries_until_binder_appears():
    port = free_port()
    holder = {}

    def bind_late():
        time.sleep(0.3)
        holder["puller"] = Puller("127.0.0.1", port)

    t = threading.Thread(target=bind_late)
    t.start()
    pusher = Pusher("127.0.0.1", port, retries=8, backoff=Backoff(base=0.05))
    t.join()
    pusher.close()
    holder["puller"].close()


def test_second_binder_rejected():
    with Puller() as puller:
        with pytest.raises(TransportError):
            Puller(puller.host, puller.port)


def test_backpressure_blocks_pusher():
    with Puller() as puller, Pusher(puller.host, puller.port) as pusher:
        with pytest.raises(TimeoutError):
            pusher.push(tagged(1), timeout=0.3)
        # the in-flight frame is still delivered exactly once
        assert tag(puller.pull(timeout=5)) == 1
        t = threading.Thread(target=pusher.push, args=(tagged(2),))
        t.start()
        assert tag(puller.pull(timeout=5)) == 2
        t.join()
        assert pusher.acked == 2


def test_pull_timeout_without_pushers():
    with Puller() as puller:
        t0 = time.monotonic()
        with pytest.raises(TimeoutError):
            puller.pull(timeout=0.2)
        assert time.monotonic() - t0 < 2


def _drain(sub, timeout=0.5):
    out = []
    while True:
        try:
            out.append(sub.recv(timeout=timeout))
        except TimeoutError:
            return out


def test_pubsub_no_replay_for_late_joiner():
    with Publisher() as pub:
        assert pub.publish_value(b"params", "v1") == 0
        with Subscriber(pub.host, pub.port, b"params") as sub:
            pub.publish_value(b"params", "v2")
            got = [deserialize(f.payload) for f in _drain(sub)]
    assert got == ["v2"]


def test_pubsub_fanout():
    with Publisher() as pub:
        subs = [Subscriber(pub.host, pub.port) for _ in range(3)]
        assert pub.publish(Frame(MsgKind.PARAMS, b"p", b"x")) == 3
        deliveries = sum(len(_drain(s)) for s in subs)
        for s in subs:
            s.close()
    assert deliveries == 3


def test_pubsub_topic_filter():
    with Publisher() as pub, Subscriber.to(pub.address, b"params") as sub:
        pub.publish(Frame(MsgKind.DATA, b"other", b"1"))
        pub.publish(Frame(MsgKind.PARAMS, b"params", b"2"))
        got = _drain(sub)
    assert [f.payload for f in got] == [b"2"]


def test_pubsub_order_is_subsequence():
    with Publisher() as pub, Subscriber(pub.host, pub.port, buffer=8) as sub:
        for i in range(500):
            pub.publish(tagged(i))
        got = [tag(f) for f in _drain(sub)]
    assert got == sorted(got) and len(set(got)) == len(got)


def test_stalled_subscriber_drop_accounting():
    payload = b"x" * 8192
    with Publisher() as pub, Subscriber(pub.host, pub.port, buffer=10) as sub:
        for i in range(1000):
            pub.publish(Frame(MsgKind.PARAMS, b"", struct.pack("<I", i) + payload))
        time.sleep(0.2)
        delivered = _drain(sub, timeout=1.0)
        (stats,) = pub.stats()
    assert stats["dropped"] > 0
    assert len(delivered) + stats["dropped"] == 1000
    seq = [struct.unpack_from("<I", f.payload)[0] for f in delivered]
    assert seq == sorted(seq) and seq[-1] == 999


def test_publish_without_subscribers_succeeds():
    with Publisher() as pub:
        assert pub.publish(Frame(MsgKind.PARAMS, b"", b"")) == 0
        assert pub.published == 1


def test_closed_subscriber_removed():
    with Publisher() as pub:
        sub = Subscriber(pub.host, pub.port)
        assert pub.subscriber_count == 1
        sub.close()
        deadline = time.monotonic() + 5
        while pub.subscriber_count and time.monotonic() < deadline:
            pub.publish(Frame(MsgKind.DATA, b"", b"x" * 1024))
            time.sleep(0.01)
        assert pub.subscriber_count == 0
