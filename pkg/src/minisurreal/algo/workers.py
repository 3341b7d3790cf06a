"""Process roles for the distributed trainers.

``python -m minisurreal.algo.workers <role> --config FILE --run-dir DIR [--index I]``

Roles: ``ppo-learner``, ``ppo-actor``, ``es-master``, ``es-actor``.
Service addresses come from the ``SYMPH_*`` environment set by the
local launcher.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import signal
import sys
import time
from pathlib import Path

import numpy as np

from ..datasvc import (
    ExperienceProducer,
    Mailbox,
    ParameterCache,
    ParameterSnapshot,
    ShardClient,
    request_service,
)
from ..datasvc.params import snapshot_frame
from ..envs import make
from ..nnet import GaussianPolicy
from ..orchestra.addressing import service_address_from_env
from ..wireproto import Frame, MsgKind, Publisher, Puller, Pusher, Subscriber, deserialize, parse_address, serialize
from .config import ESTrainConfig, actor_seeds, config_from_dict
from .es import DiscretizedActions, ESConfig, PerturbationRecord, assignments, draw_seeds, es_perturb, population_returns
from .learner import ESMaster, PPOConfig, PPOLearner, build_model, init_theta
from .segments import RolloutWorker, TrajectorySegment

log = logging.getLogger("minisurreal.worker")

LEARNER_INBOX = "learner"
PS = "ps"
PS_IN = "ps-in"
ES_BCAST = "es-bcast"
ES_RESULTS = "es-results"
TASK_TOPIC = b"task"

EXIT_ABORTED = 3


def shard_service(k: int) -> str:
    return f"replay-{k}"


def _addr(service: str) -> str:
    return service_address_from_env(service, os.environ)


def _bind(service: str) -> tuple[str, int]:
    return parse_address(_addr(service))


class TrainingLog:
    """Append-only JSON lines; non-finite floats become null."""

    def __init__(self, path: Path):
        self.path = path
        self._fh = open(path, "a", buffering=1)

    def write(self, record: dict):
        clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in record.items()}
        self._fh.write(json.dumps(clean, sort_keys=True) + "\n")

    def close(self):
        self._fh.close()


def write_checkpoint(run_dir: Path, iteration: int, snapshot: ParameterSnapshot, config: dict) -> Path:
    d = run_dir / "checkpoints"
    d.mkdir(parents=True, exist_ok=True)
    path = d / f"iter-{iteration:06d}.ckpt"
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(serialize({"iter": iteration, "snapshot": snapshot.to_value(), "config": json.dumps(config)}))
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> tuple[int, ParameterSnapshot, dict]:
    v = deserialize(Path(path).read_bytes())
    return int(v["iter"]), ParameterSnapshot.from_value(v["snapshot"]), json.loads(v["config"])


# -- PPO -----------------------------------------------------------------------

def ppo_learner(cfg: PPOConfig, run_dir: Path, shards: int, raw_config: dict) -> int:
    env = make(cfg.env)
    model = build_model(env.spec.obs_dim, env.spec.low, env.spec.high, cfg.hidden)
    learner = PPOLearner(model, init_theta(model, cfg.seed), cfg)
    mailbox = Mailbox(Puller(*_bind(LEARNER_INBOX)))
    clients = [ShardClient(_addr(request_service(shard_service(k))), mailbox) for k in range(shards)]
    ps = Pusher.to(_addr(PS_IN), retries=40)
    trace = TrainingLog(run_dir / "train.jsonl")

    def publish():
        snap = ParameterSnapshot.create(learner.version, learner.theta)
        ps.push(snapshot_frame(snap))
        return snap

    publish()
    t_start = time.monotonic()
    dead_after = 60.0
    dropped = 0
    for it in range(1, cfg.iters + 1):
        t_iter = time.monotonic()
        segments: list[TrajectorySegment] = []
        last_data = time.monotonic()
        k = 0
        while len(segments) < cfg.segments_per_iter:
            need = cfg.segments_per_iter - len(segments)
            reply = clients[k % shards].request("drain", n=need)
            k += 1
            got = [TrajectorySegment.from_value(b["data"]) for b in reply["items"]]
            if got:
                last_data = time.monotonic()
                admitted = learner.admit(got)
                dropped += len(got) - len(admitted)
                segments.extend(admitted)
            elif time.monotonic() - last_data > dead_after:
                print(f"error: aborted: no experience for {dead_after:.0f}s; all actors dead?", flush=True)
                trace.close()
                return EXIT_ABORTED
            else:
                time.sleep(0.005)
        segments = segments[:cfg.segments_per_iter]
        stats = learner.update(segments)
        snap = publish()
        returns = [r for s in segments for r in s.episode_returns]
        elapsed = time.monotonic() - t_iter
        trace.write({
            "iter": it,
            "wallclock": time.monotonic() - t_start,
            "mean_return": float(np.mean(returns)) if returns else float("nan"),
            "episodes": len(returns),
            "realized_kl": stats["realized_kl"],
            "lambda": stats["lambda"],
            "steps_per_sec": stats["steps"] / elapsed if elapsed > 0 else float("nan"),
            "version": learner.version,
            "dropped_stale": dropped,
            "max_lag": int(max(learner.version - 1 - s.version for s in segments)),
        })
        if it % cfg.checkpoint_every == 0 or it == cfg.iters:
            write_checkpoint(run_dir, it, snap, raw_config)
    trace.close()
    print(f"learner finished {cfg.iters} iterations", flush=True)
    return 0


def ppo_actor(cfg: PPOConfig, index: int, shards: int) -> int:
    env = make(cfg.env)
    model = build_model(env.spec.obs_dim, env.spec.low, env.spec.high, cfg.hidden)
    env_seed, noise_seed = actor_seeds(cfg.seed, index)
    worker = RolloutWorker(env, model.policy, model.value_spec, env_seed % 2**31, noise_seed)
    cache = ParameterCache(Subscriber.to(_addr(PS), b"params", retries=40))
    producer = ExperienceProducer(f"actor-{index}", [_addr(shard_service(k)) for k in range(shards)])
    print(f"actor-{index} running", flush=True)
    last_version = -1
    while True:
        snap = cache.wait_for(0, timeout=None)
        if snap.version < last_version:
            raise AssertionError(f"snapshot version went back from {last_version} to {snap.version}")
        last_version = snap.version
        pflat, vflat = model.split(snap.flat_params)
        seg = worker.rollout(pflat, vflat, cfg.segment_length, snap.version)
        producer.send(seg.to_value())


# -- ES ------------------------------------------------------------------------

def _es_setup(cfg: ESTrainConfig):
    env = make(cfg.env)
    policy = GaussianPolicy(env.spec.obs_dim, env.spec.low, env.spec.high, hidden=cfg.hidden, trainable_std=False)
    es_cfg = ESConfig(sigma=cfg.sigma, population=cfg.population, lr=cfg.lr, centered=cfg.centered,
                      mirrored=cfg.mirrored, action_bins=cfg.action_bins)
    return env, policy, es_cfg


def es_master(cfg: ESTrainConfig, run_dir: Path, raw_config: dict) -> int:
    env, policy, es_cfg = _es_setup(cfg)
    master = ESMaster(policy.init(cfg.seed), es_cfg)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    results = Puller(*_bind(ES_RESULTS))
    bcast = Publisher(*_bind(ES_BCAST))
    trace = TrainingLog(run_dir / "train.jsonl")
    if not bcast.wait_for_subscribers(cfg.actors, timeout=120):
        print(f"error: aborted: only {bcast.subscriber_count} of {cfg.actors} actors subscribed", flush=True)
        return EXIT_ABORTED
    n_seeds = cfg.population // 2 if cfg.mirrored else cfg.population
    t_start = time.monotonic()
    it = 0
    attempt = 0
    while it < cfg.iters:
        t_iter = time.monotonic()
        seeds = draw_seeds(rng, n_seeds)
        episode_seed = int(rng.integers(0, 2**31))
        tasks = assignments(seeds, es_cfg)
        per_actor = [tasks[i::cfg.actors] for i in range(cfg.actors)]
        task_id = it * 1000 + attempt
        msg = {
            "task": task_id,
            "version": master.version,
            "params": master.theta,
            "episode_seed": episode_seed,
            "assign": [[[s.to_bytes(8, "little"), sign] for s, sign in chunk] for chunk in per_actor],
        }
        frame = Frame(MsgKind.PARAMS, TASK_TOPIC, serialize(msg))
        bcast.publish(frame)
        records: dict[tuple[int, int], PerturbationRecord] = {}
        steps = 0
        deadline = time.monotonic() + cfg.straggler_timeout
        last_send = time.monotonic()
        while len(records) < len(tasks) and time.monotonic() < deadline:
            try:
                reply = deserialize(results.pull(timeout=0.2).payload)
            except TimeoutError:
                # cover subscribers that reconnected after the broadcast
                if time.monotonic() - last_send > 2.0:
                    bcast.publish(frame)
                    last_send = time.monotonic()
                continue
            if reply["task"] != task_id:
                continue
            steps += int(reply["steps"])
            for v in reply["records"]:
                rec = PerturbationRecord.from_value(v)
                records[(rec.seed, rec.sign)] = rec
        if len(records) < cfg.min_fraction * len(tasks):
            attempt += 1
            print(f"iteration {it + 1}: {len(records)}/{len(tasks)} records, retrying", flush=True)
            continue
        recs = list(records.values())
        if es_cfg.mirrored:
            # a lone half of a pair carries no antithetic information
            complete = {s for (s, sign) in records if (s, -sign) in records}
            recs = [r for r in recs if r.seed in complete]
        raw = np.array([r.ret for r in recs])
        if cfg.normalize_returns and not es_cfg.mirrored:
            scale = raw.std()
            recs = [PerturbationRecord(r.seed, (r.ret - raw.mean()) / (scale + 1e-8), r.actor_id, r.sign)
                    for r in recs]
        elif cfg.normalize_returns:
            scale = raw.std()
            recs = [PerturbationRecord(r.seed, r.ret / (scale + 1e-8), r.actor_id, r.sign) for r in recs]
        master.update(recs, seed_table=seeds)
        it += 1
        attempt = 0
        elapsed = time.monotonic() - t_iter
        trace.write({
            "iter": it,
            "wallclock": time.monotonic() - t_start,
            "mean_return": float(raw.mean()),
            "realized_kl": None,
            "lambda": None,
            "steps_per_sec": steps / elapsed if elapsed > 0 else float("nan"),
            "version": master.version,
            "records": len(recs),
        })
        if it % cfg.checkpoint_every == 0 or it == cfg.iters:
            write_checkpoint(run_dir, it, ParameterSnapshot.create(master.version, master.theta), raw_config)
    trace.close()
    print(f"master finished {cfg.iters} iterations", flush=True)
    return 0


def es_actor(cfg: ESTrainConfig, index: int) -> int:
    env, policy, es_cfg = _es_setup(cfg)
    snap = DiscretizedActions(env.spec.low, env.spec.high, cfg.action_bins) if cfg.action_bins else None
    sub = Subscriber.to(_addr(ES_BCAST), TASK_TOPIC, retries=40, buffer=4)
    out = Pusher.to(_addr(ES_RESULTS), retries=40)
    print(f"actor-{index} running", flush=True)
    done_task = None
    for frame in sub:
        msg = deserialize(frame.payload)
        if msg["task"] == done_task:
            continue
        done_task = msg["task"]
        mine = [(int.from_bytes(s, "little"), int(sign)) for s, sign in msg["assign"][index]]
        if not mine:
            out.push_value({"task": done_task, "steps": 0, "records": []})
            continue
        theta = np.asarray(msg["params"])
        thetas = np.stack([es_perturb(theta, s, es_cfg.sigma, sign) for s, sign in mine])
        # noise stream per (seed, sign) so mirrored halves draw independently
        noise = [[s, 0 if sign > 0 else 1] for s, sign in mine]
        rets, lengths = population_returns(policy, thetas, lambda: make(cfg.env), int(msg["episode_seed"]), noise, snap)
        records = [PerturbationRecord(s, float(j), index, sign).to_value() for (s, sign), j in zip(mine, rets)]
        out.push_value({"task": done_task, "steps": int(lengths.sum()), "records": records})
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m minisurreal.algo.workers")
    parser.add_argument("role", choices=["ppo-learner", "ppo-actor", "es-master", "es-actor"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--run-dir", default=".")
    parser.add_argument("--index", type=int, default=0)
    parser.add_argument("--shards", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stdout)
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    raw = json.loads(Path(args.config).read_text())
    cfg = config_from_dict(raw)
    run_dir = Path(args.run_dir)
    if args.role == "ppo-learner":
        return ppo_learner(cfg, run_dir, args.shards, raw)
    if args.role == "ppo-actor":
        return ppo_actor(cfg, args.index, args.shards)
    if args.role == "es-master":
        return es_master(cfg, run_dir, raw)
    return es_actor(cfg, args.index)


if __name__ == "__main__":
    sys.exit(main())
