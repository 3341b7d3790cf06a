"""Short distributed training runs on the local backend."""

import os
import signal

import numpy as np
import pytest

from minisurreal.algo import ESTrainConfig, PPOConfig, read_checkpoint
from minisurreal.algo.train import TrainingAborted, es_train, first_reaching, ppo_train, smoothed_returns
from minisurreal.orchestra import Registry, list_experiments

LAMBDA_MIN, LAMBDA_MAX = 1e-4, 1e4


@pytest.mark.timeout(180)
def test_es_population_equals_actors_gives_n_records_per_iteration(surreal_home, tmp_path):
    cfg = ESTrainConfig(actors=3, population=3, iters=6, checkpoint_every=4, seed=1)
    records = es_train(cfg, run_dir=tmp_path / "run")
    assert [r["iter"] for r in records] == list(range(1, 7))
    assert all(r["records"] == 3 for r in records)
    assert [r["version"] for r in records] == sorted(r["version"] for r in records)
    ckpts = sorted((tmp_path / "run" / "checkpoints").glob("*.ckpt"))
    assert [p.name for p in ckpts] == ["iter-000004.ckpt", "iter-000006.ckpt"]
    it, snap, config = read_checkpoint(ckpts[-1])
    assert it == 6 and snap.version == records[-1]["version"]
    assert config["population"] == 3
    assert list_experiments() == []


@pytest.mark.timeout(240)
def test_ppo_short_run_respects_lambda_clamp_and_staleness(surreal_home, tmp_path):
    cfg = PPOConfig(actors=2, iters=6, segment_length=64, segments_per_iter=2, checkpoint_every=3, seed=2)
    records = ppo_train(cfg, run_dir=tmp_path / "run")
    assert len(records) == 6
    for r in records:
        assert LAMBDA_MIN <= r["lambda"] <= LAMBDA_MAX
        assert r["realized_kl"] >= 0
        assert r["max_lag"] <= cfg.staleness
    versions = [r["version"] for r in records]
    assert versions == sorted(versions)
    assert (tmp_path / "run" / "train.jsonl").read_text().count("\n") == 6
    assert len(list((tmp_path / "run" / "checkpoints").glob("*.ckpt"))) == 2
    assert list_experiments() == []


@pytest.mark.timeout(180)
def test_all_actors_dead_aborts_and_cleans_up(surreal_home, tmp_path):
    registry = Registry()

    def kill_actors(rec):
        if rec["iter"] == 1:
            (name,) = registry.names()
            for proc, info in registry.read_state(name)["processes"].items():
                if proc.startswith("actor-"):
                    os.killpg(info["pgid"], signal.SIGKILL)

    cfg = ESTrainConfig(actors=2, population=4, iters=200, seed=3)
    with pytest.raises(TrainingAborted):
        es_train(cfg, run_dir=tmp_path / "run", on_record=kill_actors)
    assert registry.names() == []


def test_unknown_env_is_rejected_before_launch(surreal_home, tmp_path):
    with pytest.raises(KeyError, match="pointmass2d"):
        es_train(ESTrainConfig(env="nope", iters=1), run_dir=tmp_path)
    with pytest.raises(ValueError):
        ppo_train(PPOConfig(actors=0, iters=1), run_dir=tmp_path)


def test_smoothed_returns_and_first_reaching():
    recs = [{"iter": i + 1, "mean_return": float(i)} for i in range(30)]
    sm = smoothed_returns(recs, window=20)
    assert np.isnan(sm[:19]).all()
    assert sm[19] == pytest.approx(np.mean(np.arange(20)))
    assert first_reaching(recs, 10.0, window=20) == 21
    assert first_reaching(recs, 100.0, window=20) is None
    recs[25]["mean_return"] = None
    assert np.isfinite(smoothed_returns(recs)[25])
