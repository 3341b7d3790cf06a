import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minisurreal.bench import fit_through_origin, measure_actors, measure_shards, run_proto
from minisurreal.bench.proto import decode_transitions, make_transitions
from minisurreal.wireproto import serialize


def test_fit_exact_line():
    slope, r2 = fit_through_origin([1, 2, 4, 8], [3.0, 6.0, 12.0, 24.0])
    assert slope == pytest.approx(3.0) and r2 == pytest.approx(1.0)


def test_fit_flat_throughput_has_poor_efficiency():
    # a saturated machine: total rate does not grow with actors
    slope, r2 = fit_through_origin([1, 2, 4, 8], [100.0] * 4)
    assert slope / 100.0 < 0.3


@given(st.floats(0.1, 1e4), st.lists(st.floats(-1e-3, 1e-3), min_size=4, max_size=4))
@settings(max_examples=50, deadline=None)
def test_fit_recovers_slope_under_small_noise(b, noise):
    x = np.array([1.0, 2.0, 4.0, 8.0])
    y = b * x * (1 + np.array(noise))
    slope, r2 = fit_through_origin(x, y)
    assert slope == pytest.approx(b, rel=2e-3)
    assert r2 > 0.999


def test_transition_payload_size_and_collation():
    steps = make_transitions(64 << 10)
    payload = serialize(steps)
    assert 0.9 * (64 << 10) <= len(payload) <= 64 << 10
    batch = decode_transitions(payload)
    assert batch["obs"].shape == (len(steps), 17) and batch["action"].shape == (len(steps), 6)
    np.testing.assert_array_equal(batch["obs"][3], steps[3]["obs"])
    assert batch["reward"][5] == steps[5]["reward"]


@pytest.mark.timeout(120)
def test_proto_reports_every_mode():
    out = run_proto(payload_bytes=64 << 10, iters=8, warmup=2, workers=2)
    for mode in ("inline", "threads", "processes"):
        assert out[f"{mode}_iters_per_sec"] > 0
    assert out["ratio"] == pytest.approx(out["processes_iters_per_sec"] / out["inline_iters_per_sec"])


@pytest.mark.timeout(120)
def test_scaling_point(surreal_home):
    p = measure_actors(2, duration=0.5, warmup=1.5)
    assert p["actors"] == 2 and len(p["per_actor"]) == 2
    assert p["steps_per_sec"] > 0


@pytest.mark.timeout(120)
def test_shard_point_conserves_batches(surreal_home):
    p = measure_shards(2, producers=2, duration=2.5, batch_floats=256, warmup=1.5)
    assert p["ingest_per_sec"] > 0 and len(p["per_shard"]) == 2
    assert p["ingested"] == p["produced"]
