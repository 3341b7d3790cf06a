"""Desk-scale system benchmarks: offload pipeline, actor scaling, sharded replay."""

from .common import fit_through_origin
from .proto import learner_step, run_proto
from .scaling import measure_actors, run_scaling
from .shard import measure_shards, replay_service, run_shard

__all__ = [
    "fit_through_origin",
    "learner_step",
    "measure_actors",
    "measure_shards",
    "replay_service",
    "run_proto",
    "run_scaling",
    "run_shard",
]
