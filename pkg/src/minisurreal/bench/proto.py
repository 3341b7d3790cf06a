"""Learner iteration speed with inline decoding versus the offload fetcher.

Each message is a list of per-transition records, so turning it into
training arrays costs interpreter time per transition, as it does for a
learner consuming experience from many actors.  A learner iteration takes
one message, collates it and runs a dense step over the batch.
"""

from __future__ import annotations

import multiprocessing as mp
import time

import numpy as np

from ..wireproto import Frame, MsgKind, Puller, Pusher, deserialize, serialize, spawn_offload_fetcher

OBS_DIM = 17
ACT_DIM = 6
MODES = ("inline", "threads", "processes")


def make_transitions(payload_bytes: int, seed: int = 0) -> list[dict]:
    """Transitions whose encoding is about ``payload_bytes`` long."""
    rng = np.random.default_rng(seed)
    one = len(serialize([_transition(rng)]))
    return [_transition(rng) for _ in range(max(1, payload_bytes // one))]


def _transition(rng) -> dict:
    return {
        "obs": rng.standard_normal(OBS_DIM),
        "action": rng.standard_normal(ACT_DIM),
        "reward": float(rng.standard_normal()),
        "done": 0,
        "logp": float(rng.standard_normal()),
    }


def decode_transitions(payload) -> dict:
    """Wire bytes to a stacked training batch."""
    steps = deserialize(payload)
    return {
        "obs": np.stack([t["obs"] for t in steps]),
        "action": np.stack([t["action"] for t in steps]),
        "reward": np.array([t["reward"] for t in steps]),
        "done": np.array([t["done"] for t in steps], dtype=bool),
        "logp": np.array([t["logp"] for t in steps]),
    }


def learner_step(obs: np.ndarray, weights: np.ndarray) -> float:
    """Stand-in for a gradient step: two dense products over the batch."""
    h = np.tanh(obs @ weights[0])
    return float((h @ weights[1]).sum())


def _feed(address: str, payload_bytes: int, count: int, seed: int):
    frame = Frame(MsgKind.DATA, b"exp", serialize(make_transitions(payload_bytes, seed)))
    with Pusher.to(address, retries=40) as push:
        for _ in range(count):
            push.push(frame)


def _run_mode(mode: str, payload_bytes: int, iters: int, warmup: int, workers: int, queue_capacity: int,
              producers: int, weights) -> float:
    total = iters + warmup
    ctx = mp.get_context("spawn")
    puller = Puller()
    share = [total // producers + (1 if i < total % producers else 0) for i in range(producers)]
    procs = [ctx.Process(target=_feed, args=(puller.address, payload_bytes, n, i), daemon=True)
             for i, n in enumerate(share) if n]
    for p in procs:
        p.start()
    fetcher = None
    try:
        if mode == "inline":
            take = lambda: decode_transitions(puller.pull(timeout=120).payload)
        else:
            fetcher = spawn_offload_fetcher(puller, queue_capacity, workers=workers, decode=decode_transitions,
                                            processes=mode == "processes")
            take = lambda: fetcher.take(timeout=120)
        for _ in range(warmup):
            learner_step(take()["obs"], weights)
        t0 = time.perf_counter()
        for _ in range(iters):
            learner_step(take()["obs"], weights)
        return iters / (time.perf_counter() - t0)
    finally:
        if fetcher is not None:
            fetcher.close()
        puller.close()
        for p in procs:
            p.join(timeout=10)
            if p.is_alive():
                p.terminate()


def run_proto(payload_bytes: int = 1 << 20, iters: int = 40, workers: int = 3, queue_capacity: int = 4,
              producers: int = 2, warmup: int = 4, hidden: int = 256, modes=MODES) -> dict:
    """Iterations per second for each consumer mode.

    ``ratio`` compares process offload against inline decoding;
    ``thread_ratio`` does the same for thread offload.
    """
    rng = np.random.default_rng(1)
    weights = (rng.standard_normal((OBS_DIM, hidden)) / np.sqrt(OBS_DIM),
               rng.standard_normal((hidden, hidden)) / np.sqrt(hidden))
    out = {"payload_bytes": len(serialize(make_transitions(payload_bytes))), "iters": iters, "workers": workers}
    for mode in modes:
        out[f"{mode}_iters_per_sec"] = _run_mode(mode, payload_bytes, iters, warmup, workers, queue_capacity,
                                                 producers, weights)
    if "inline" in modes:
        base = out["inline_iters_per_sec"]
        if "processes" in modes:
            out["ratio"] = out["processes_iters_per_sec"] / base
        if "threads" in modes:
            out["thread_ratio"] = out["threads_iters_per_sec"] / base
    return out
