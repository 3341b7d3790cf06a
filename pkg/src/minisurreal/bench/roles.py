"""Benchmark worker processes: ``python -m minisurreal.bench.roles {stepper,producer}``.

Every worker sleeps until a shared wall-clock start time, works for a fixed
duration and prints one JSON line with its counts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np


def _wait_until(t0: float):
    delay = t0 - time.time()
    if delay > 0:
        time.sleep(delay)


def stepper(env_id: str, start: float, duration: float, seed: int) -> dict:
    """Actor stand-in: policy forward plus env step in a tight loop."""
    from ..envs import make
    from ..nnet import GaussianPolicy

    env = make(env_id)
    spec = env.spec
    policy = GaussianPolicy(spec.obs_dim, spec.low, spec.high, hidden=(32, 32))
    rng = np.random.default_rng(seed)
    flat = policy.init(rng)
    obs = env.reset(seed).observation
    _wait_until(start)
    steps = 0
    t0 = time.time()
    end = start + duration
    while True:
        action, _, _ = policy.act(flat, obs, rng)
        state, _ = env.step(action)
        obs = state.observation
        steps += 1
        if state.done:
            obs = env.reset(seed + steps).observation
        if steps % 64 == 0 and time.time() >= end:
            break
    return {"steps": steps, "elapsed": time.time() - t0}


def producer(pid: str, shards: int, start: float, duration: float, batch_floats: int) -> dict:
    """Push fixed-size experience batches round-robin over ``shards`` buffers."""
    from ..datasvc import ExperienceProducer
    from ..orchestra import service_address_from_env
    from .shard import replay_service

    addresses = [service_address_from_env(replay_service(k), os.environ) for k in range(shards)]
    producer = ExperienceProducer(pid, addresses)
    data = {"obs": np.random.default_rng(0).standard_normal(batch_floats)}
    _wait_until(start)
    sent = 0
    end = start + duration
    while time.time() < end:
        producer.send(data, timeout=max(0.1, end - time.time() + 5.0))
        sent += 1
    producer.close()
    return {"sent": sent}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m minisurreal.bench.roles")
    sub = parser.add_subparsers(dest="role", required=True)
    st = sub.add_parser("stepper")
    st.add_argument("--env", default="pointmass2d")
    st.add_argument("--seed", type=int, default=0)
    pr = sub.add_parser("producer")
    pr.add_argument("--shards", type=int, required=True)
    pr.add_argument("--batch-floats", type=int, default=4096)
    for p in (st, pr):
        p.add_argument("--start", type=float, required=True)
        p.add_argument("--duration", type=float, required=True)
    args = parser.parse_args(argv)
    if args.role == "stepper":
        out = stepper(args.env, args.start, args.duration, args.seed)
    else:
        out = producer(os.environ.get("SYMPH_PROCESS_NAME", "producer"), args.shards, args.start,
                       args.duration, args.batch_floats)
    print(json.dumps(out), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
