"""Diagonal Gaussian densities and the policy built on the mean network."""

from __future__ import annotations

import numpy as np

from .mlp import TANH, MlpSpec, ShapeError, backward, flatten, forward, init_params, unflatten

LOG_2PI = np.log(2.0 * np.pi)
PPO_INIT_LOG_STD = np.log(0.3)
ES_STD = 0.01


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite input")


def gaussian_logprob(mean, log_std, action):
    """Log density of ``action`` under N(mean, diag(exp(log_std)^2)).

    The last axis is the action dimension; leading axes are batch.
    """
    mean, log_std, action = (np.asarray(v, dtype=np.float64) for v in (mean, log_std, action))
    _finite(mean, log_std, action)
    if mean.shape[-1:] != action.shape[-1:] or log_std.shape[-1:] != mean.shape[-1:]:
        raise ShapeError("mean, log_std and action must share the last dimension")
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_kl(mean1, log_std1, mean2, log_std2):
    """KL[N1 || N2] for diagonal Gaussians, summed over the last axis."""
    m1, s1, m2, s2 = (np.asarray(v, dtype=np.float64) for v in (mean1, log_std1, mean2, log_std2))
    _finite(m1, s1, m2, s2)
    if not (m1.shape[-1:] == m2.shape[-1:] == s1.shape[-1:] == s2.shape[-1:]):
        raise ShapeError("all arguments must share the last dimension")
    var_ratio = np.exp(2.0 * (s1 - s2))
    diff2 = (m1 - m2) ** 2 * np.exp(-2.0 * s2)
    kl = np.sum(s2 - s1 + 0.5 * (var_ratio + diff2 - 1.0), axis=-1)
    # clamp round-off so identical distributions give exactly zero
    return np.maximum(kl, 0.0)


class GaussianPolicy:
    """Tanh-bounded mean network plus a log standard deviation.

    With ``trainable_std`` the flat vector is the network's parameters
    followed by one log-std per action dimension.  Otherwise the std is a
    fixed constant and the flat vector holds the network alone.
    """

    def __init__(self, obs_dim: int, act_low, act_high, hidden=(32, 32), trainable_std: bool = True,
                 init_log_std: float = PPO_INIT_LOG_STD, fixed_std: float = ES_STD):
        self.low = np.asarray(act_low, dtype=np.float64).reshape(-1)
        self.high = np.asarray(act_high, dtype=np.float64).reshape(-1)
        self.act_dim = self.low.size
        self.net = MlpSpec((obs_dim, *hidden, self.act_dim), TANH)
        self.trainable_std = trainable_std
        self.init_log_std = float(init_log_std)
        self.fixed_log_std = np.full(self.act_dim, np.log(fixed_std))
        self.center = (self.high + self.low) / 2
        self.half = (self.high - self.low) / 2

    @property
    def param_count(self) -> int:
        return self.net.param_count + (self.act_dim if self.trainable_std else 0)

    def init(self, rng) -> np.ndarray:
        flat = flatten(init_params(self.net, rng))
        if self.trainable_std:
            flat = np.concatenate([flat, np.full(self.act_dim, self.init_log_std)])
        return flat

    def split(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_count,):
            raise ShapeError(f"policy vector has {flat.size} entries, expected {self.param_count}")
        n = self.net.param_count
        log_std = flat[n:] if self.trainable_std else self.fixed_log_std
        return unflatten(self.net, flat[:n]), log_std

    def mean(self, flat, obs) -> np.ndarray:
        params, _ = self.split(flat)
        return self.center + self.half * forward(self.net, params, obs)

    def log_std(self, flat) -> np.ndarray:
        return self.split(flat)[1]

    def act(self, flat, obs, rng) -> tuple[np.ndarray, float, np.ndarray]:
        """Sample an action; returns (action, log-prob, mean)."""
        mu = self.mean(flat, obs)
        log_std = self.log_std(flat)
        a = mu + np.exp(log_std) * rng.standard_normal(self.act_dim)
        return a, float(gaussian_logprob(mu, log_std, a)), mu

    def mean_backward(self, flat, obs, grad_mean) -> np.ndarray:
        """Gradient of ``sum(grad_mean * mean(obs))`` w.r.t. the network part of ``flat``."""
        params, _ = self.split(flat)
        grads, _ = backward(self.net, params, obs, np.asarray(grad_mean) * self.half)
        return flatten(grads)
