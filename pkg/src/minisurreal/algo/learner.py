"""Learner-side update steps shared by the in-process and distributed trainers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nnet import GaussianPolicy, MlpSpec, NumericError, gaussian_kl
from .es import ESConfig, es_gradient_estimate
from .ppo import Adam, KLState, PPOModel, adapt_kl, batch_from_segments


class StalenessError(AssertionError):
    """A segment older than the staleness window reached the gradient step."""


@dataclass
class PPOConfig:
    env: str = "pointmass2d"
    actors: int = 4
    iters: int = 300
    segment_length: int = 256
    segments_per_iter: int = 4
    gamma: float = 0.99
    kl_target: float = 0.01
    lam_init: float = 1.0
    epochs: int = 3
    minibatch: int = 64
    lr: float = 3e-4
    clip_norm: float = 5.0
    staleness: int = 2
    hidden: tuple = (32, 32)
    seed: int = 0
    checkpoint_every: int = 50
    normalize_advantages: bool = True


def build_model(obs_dim: int, low, high, hidden=(32, 32)) -> PPOModel:
    policy = GaussianPolicy(obs_dim, low, high, hidden=hidden, trainable_std=True)
    return PPOModel(policy, MlpSpec((obs_dim, *hidden, 1)))


def init_theta(model: PPOModel, seed: int) -> np.ndarray:
    from ..nnet import flatten, init_params

    rng = np.random.default_rng(seed)
    pflat = model.policy.init(rng)
    vflat = flatten(init_params(model.value_spec, rng, last_scale=1.0))
    return np.concatenate([pflat, vflat])


class PPOLearner:
    """Holds parameters, optimizer and KL state; one call to :meth:`update` per iteration."""

    def __init__(self, model: PPOModel, theta, config: PPOConfig):
        self.model = model
        self.theta = np.asarray(theta, dtype=np.float64).copy()
        self.config = config
        self.opt = Adam(model.param_count, lr=config.lr, clip=config.clip_norm)
        self.kl = KLState(lam=config.lam_init, target=config.kl_target)
        self.version = 0
        self.rng = np.random.default_rng(config.seed + 7919)
        self.rejected_batches = 0

    def admit(self, segments) -> list:
        """Drop segments whose policy version lags by more than the window."""
        return [s for s in segments if self.version - s.version <= self.config.staleness]

    def update(self, segments) -> dict:
        cfg = self.config
        for s in segments:
            if self.version - s.version > cfg.staleness:
                raise StalenessError(f"segment from version {s.version} at learner version {self.version}")
        batch = batch_from_segments(segments, cfg.gamma, cfg.normalize_advantages)
        n = len(batch)
        for _ in range(cfg.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                mb = batch.take(order[start:start + cfg.minibatch])
                try:
                    _, grad, _ = self.model.loss_and_grad(self.theta, mb, self.kl)
                except NumericError:
                    self.rejected_batches += 1
                    continue
                self.theta = self.opt.step(self.theta, grad)
        pol = self.model.policy
        pflat = self.theta[:self.model.n_policy]
        realized = float(np.mean(gaussian_kl(batch.means_old, batch.log_std_old,
                                             pol.mean(pflat, batch.obs), pol.log_std(pflat))))
        lam_used = self.kl.lam
        self.kl = adapt_kl(self.kl, realized)
        self.version += 1
        return {"realized_kl": realized, "lambda": lam_used, "next_lambda": self.kl.lam, "steps": n}


class ESMaster:
    """Mean parameters plus the plain gradient-ascent step."""

    def __init__(self, theta, config: ESConfig):
        self.theta = np.asarray(theta, dtype=np.float64).copy()
        self.config = config
        self.version = 0

    def update(self, records, seed_table=None) -> np.ndarray:
        g = es_gradient_estimate(records, self.theta, self.config.sigma, self.config, seed_table)
        self.theta = self.theta + self.config.lr * g
        self.version += 1
        return g
