"""Trainer configurations and their JSON form."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .learner import PPOConfig


@dataclass
class ESTrainConfig:
    env: str = "pointmass2d"
    actors: int = 4
    iters: int = 500
    population: int = 64
    sigma: float = 0.02
    lr: float = 0.01
    centered: bool = True
    mirrored: bool = False
    normalize_returns: bool = True
    action_bins: int | None = None
    hidden: tuple = (32, 32)
    seed: int = 0
    checkpoint_every: int = 50
    straggler_timeout: float = 30.0
    min_fraction: float = 0.8


def config_to_json(cfg) -> str:
    return json.dumps({"kind": type(cfg).__name__, **dataclasses.asdict(cfg)}, sort_keys=True)


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", "PPOConfig")
    cls = {"PPOConfig": PPOConfig, "ESTrainConfig": ESTrainConfig}[kind]
    if "hidden" in d:
        d["hidden"] = tuple(d["hidden"])
    return cls(**d)


def actor_seeds(seed: int, index: int) -> tuple[int, int]:
    """Independent (env, noise) seeds for actor ``index`` of a run."""
    a, b = np.random.SeedSequence([seed, index]).generate_state(2)
    return int(a), int(b)
