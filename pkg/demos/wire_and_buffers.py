"""Encode experience, move it over push-pull and sample it from a replay shard."""

import threading

import numpy as np

from minisurreal.datasvc import UNIFORM, BufferShard, ExperienceBatch
from minisurreal.wireproto import MsgKind, Puller, Pusher, deserialize, encode_frame, serialize

# A Value tree and its wire size: every node is tag + u32 length + body
obs = np.linspace(0.0, 1.0, 6)
value = {"obs": obs, "reward": -0.25, "done": False}
print("encoded bytes:", len(serialize(value)))
print("params frame:", encode_frame(MsgKind.PARAMS, b"w", b"\xab\xcd").hex(" "))

# Push-pull: the pusher blocks until the puller has taken each frame
puller = Puller()
shard = BufferShard(UNIFORM, capacity=50)


def produce():
    with Pusher.to(puller.address) as push:
        for seq in range(1, 101):
            push.push_value(ExperienceBatch("actor-0", seq, {"obs": obs * seq}).to_value())


t = threading.Thread(target=produce)
t.start()
for _ in range(100):
    shard.insert(ExperienceBatch.from_value(deserialize(puller.pull(timeout=5).payload)))
t.join()
puller.close()

# Uniform shards keep the newest `capacity` items
print(shard.stats())
sample = shard.sample_uniform(5, seed=0)
print("sampled sequences:", sorted(b.sequence for b in sample))
