"""Run the distributed trainers as local experiments and follow their logs."""

from __future__ import annotations

import json
import signal
import sys
import threading
import time
import uuid
from pathlib import Path

import numpy as np

from ..envs import make
from ..orchestra import ExperimentSpec, Registry, launch_local
from .config import ESTrainConfig, config_to_json
from .learner import PPOConfig
from ..datasvc import request_service
from .workers import ES_BCAST, ES_RESULTS, LEARNER_INBOX, PS, PS_IN, shard_service


class TrainingAborted(RuntimeError):
    """The learner or master gave up, or every actor died."""


def _worker_cmd(role: str, cfg_path: Path, run_dir: Path, **extra) -> list[str]:
    cmd = [sys.executable, "-m", "minisurreal.algo.workers", role, "--config", str(cfg_path), "--run-dir", str(run_dir)]
    for k, v in extra.items():
        cmd += [f"--{k}", str(v)]
    return cmd


def ppo_experiment(name: str, cfg: PPOConfig, cfg_path: Path, run_dir: Path, shards: int = 1) -> ExperimentSpec:
    """Learner, parameter server, ``shards`` fifo buffers and ``cfg.actors`` actors."""
    exp = ExperimentSpec(name)
    replay = [shard_service(k) for k in range(shards)]
    learner = exp.new_process("learner", _worker_cmd("ppo-learner", cfg_path, run_dir, shards=shards))
    learner.bind(LEARNER_INBOX).connect(PS_IN, *[request_service(s) for s in replay])
    exp.new_process("ps", [sys.executable, "-m", "minisurreal.datasvc", "ps"]).bind(PS, PS_IN)
    # a small fifo keeps actors at most about one iteration ahead of the learner
    capacity = max(1, -(-cfg.segments_per_iter // shards))
    for s in replay:
        exp.new_process(s, [sys.executable, "-m", "minisurreal.datasvc", "shard", "--service", s,
                            "--mode", "fifo", "--capacity", str(capacity)]).bind(s, request_service(s))
    for i in range(cfg.actors):
        exp.new_process(f"actor-{i}", _worker_cmd("ppo-actor", cfg_path, run_dir, index=i, shards=shards)).connect(PS, *replay)
    exp.new_group("core", ["learner", "ps", *replay])
    return exp


def es_experiment(name: str, cfg: ESTrainConfig, cfg_path: Path, run_dir: Path) -> ExperimentSpec:
    exp = ExperimentSpec(name)
    exp.new_process("master", _worker_cmd("es-master", cfg_path, run_dir)).bind(ES_BCAST, ES_RESULTS)
    for i in range(cfg.actors):
        exp.new_process(f"actor-{i}", _worker_cmd("es-actor", cfg_path, run_dir, index=i)).connect(ES_BCAST, ES_RESULTS)
    return exp


def _validate(cfg):
    make(cfg.env)
    if cfg.actors < 1:
        raise ValueError("need at least one actor")
    if cfg.iters < 1:
        raise ValueError("need at least one iteration")


def run_experiment(kind: str, cfg, run_dir=None, shards: int = 1, registry: Registry | None = None,
                   on_record=None, poll: float = 0.1, timeout: float | None = None) -> list[dict]:
    """Launch a PPO or ES experiment, stream its log and tear it down.

    Returns the list of per-iteration records.  Children are killed on
    return, on error and on SIGINT/SIGTERM.
    """
    _validate(cfg)
    name = f"{kind}-{cfg.env}-{uuid.uuid4().hex[:8]}"
    run_dir = Path(run_dir) if run_dir is not None else (registry or Registry()).root / "runs" / name
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = run_dir / "config.json"
    cfg_path.write_text(config_to_json(cfg))
    spec = ppo_experiment(name, cfg, cfg_path, run_dir, shards) if kind == "ppo" else es_experiment(name, cfg, cfg_path, run_dir)
    head = "learner" if kind == "ppo" else "master"
    log_path = run_dir / "train.jsonl"

    handle = launch_local(spec, registry=registry, extra_env={"PYTHONUNBUFFERED": "1"})
    previous = {sig: signal.getsignal(sig) for sig in (signal.SIGINT, signal.SIGTERM)}

    def teardown(signum, frame):
        handle.kill(grace=2.0)
        raise KeyboardInterrupt(f"signal {signum}")

    in_main = _is_main_thread()
    if in_main:
        for sig in previous:
            signal.signal(sig, teardown)
    records: list[dict] = []
    offset = 0
    deadline = None if timeout is None else time.monotonic() + timeout
    try:
        if handle.degraded:
            raise TrainingAborted("launch degraded: " + "; ".join(handle.logs(p, 1)[0] for p in spec_names(spec)
                                                                   if handle.status(p).state == "failed"))
        while True:
            offset = _read_new(log_path, offset, records, on_record)
            status = handle.status(head)
            if not status.running:
                offset = _read_new(log_path, offset, records, on_record)
                if status.code != 0 or len(records) < cfg.iters:
                    tail = " | ".join(handle.logs(head, 5))
                    raise TrainingAborted(f"{head} ended with {status} after {len(records)} iterations: {tail}")
                break
            actors = [handle.status(f"actor-{i}") for i in range(cfg.actors)]
            if not any(a.running for a in actors):
                tail = " | ".join(handle.logs("actor-0", 5))
                raise TrainingAborted(f"all actors dead ({actors[0]}): {tail}")
            if deadline is not None and time.monotonic() > deadline:
                raise TrainingAborted(f"timed out after {timeout}s with {len(records)} iterations")
            time.sleep(poll)
    finally:
        handle.kill(grace=2.0)
        if in_main:
            for sig, h in previous.items():
                signal.signal(sig, h)
    return records


def spec_names(spec: ExperimentSpec) -> list[str]:
    return [p.name for p in spec.processes]


def _is_main_thread() -> bool:
    return threading.current_thread() is threading.main_thread()


def _read_new(path: Path, offset: int, records: list, on_record) -> int:
    try:
        with open(path, "rb") as fh:
            fh.seek(offset)
            data = fh.read()
    except FileNotFoundError:
        return offset
    end = data.rfind(b"\n") + 1
    for line in data[:end].splitlines():
        rec = json.loads(line)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    return offset + end


def ppo_train(config: PPOConfig | None = None, **kwargs) -> list[dict]:
    return run_experiment("ppo", config or PPOConfig(), **kwargs)


def es_train(config: ESTrainConfig | None = None, **kwargs) -> list[dict]:
    return run_experiment("es", config or ESTrainConfig(), **kwargs)


def smoothed_returns(records, window: int = 20) -> np.ndarray:
    """Trailing mean of ``mean_return`` over ``window`` iterations (missing values skipped)."""
    vals = np.array([np.nan if r.get("mean_return") is None else r["mean_return"] for r in records], dtype=float)
    out = np.full(len(vals), np.nan)
    for i in range(len(vals)):
        chunk = vals[max(0, i - window + 1):i + 1]
        chunk = chunk[np.isfinite(chunk)]
        if i + 1 >= window and chunk.size:
            out[i] = chunk.mean()
    return out


def first_reaching(records, threshold: float, window: int = 20) -> int | None:
    """Iteration at which the smoothed return first reaches ``threshold``."""
    sm = smoothed_returns(records, window)
    hits = np.flatnonzero(sm >= threshold)
    return int(records[hits[0]]["iter"]) if hits.size else None
