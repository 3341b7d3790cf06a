"""Trajectory segments, rollouts and discounted returns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..envs import Env
from ..nnet import GaussianPolicy, MlpSpec, forward, unflatten
from ..wireproto import pack_array, unpack_array

_ARRAYS = ("obs", "actions", "rewards", "logp", "values", "dones", "means")


@dataclass
class TrajectorySegment:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    means: np.ndarray
    log_std: np.ndarray
    version: int = 0
    last_value: float = 0.0
    episode_returns: list = field(default_factory=list)
    steps: int = 0

    def __post_init__(self):
        T = len(self.rewards)
        for name in _ARRAYS:
            if len(getattr(self, name)) != T:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {T}")
        if not np.all(np.isfinite(self.logp)):
            raise ValueError("non-finite log-probabilities")
        self.steps = T

    def __len__(self):
        return len(self.rewards)

    def to_value(self) -> dict:
        out = {name: pack_array(np.asarray(getattr(self, name), dtype=np.float64)) for name in _ARRAYS}
        out["log_std"] = np.asarray(self.log_std, dtype=np.float64)
        out["version"] = int(self.version)
        out["last_value"] = float(self.last_value)
        out["episode_returns"] = np.asarray(self.episode_returns, dtype=np.float64)
        return out

    @classmethod
    def from_value(cls, v) -> "TrajectorySegment":
        arrays = {name: unpack_array(v[name]) for name in _ARRAYS}
        arrays["dones"] = arrays["dones"].astype(bool)
        return cls(**arrays, log_std=np.asarray(v["log_std"]), version=int(v["version"]),
                   last_value=float(v["last_value"]), episode_returns=list(v["episode_returns"]))


def compute_returns_and_advantages(rewards, values, dones, gamma: float, last_value: float = 0.0):
    """Discounted reward-to-go within a segment and ``A = R - V``.

    An unfinished final episode is bootstrapped with ``last_value``.
    Returns ``(returns, advantages)``.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    returns = np.empty_like(rewards)
    running = 0.0 if (len(dones) == 0 or dones[-1]) else float(last_value)
    for t in range(len(rewards) - 1, -1, -1):
        if dones[t]:
            running = 0.0
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns, returns - values


def normalize(x, eps: float = 1e-8) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean()) / (x.std() + eps)


class RolloutWorker:
    """Runs a policy in one environment, carrying episodes across segments.

    Episode ``k`` is reset with seed ``env_seed + k`` and action noise
    comes from its own stream, so a worker's output is a pure function of
    the seeds and the parameters it was given.
    """

    def __init__(self, env: Env, policy: GaussianPolicy, value_spec: MlpSpec | None,
                 env_seed: int = 0, noise_seed: int = 0):
        self.env = env
        self.policy = policy
        self.value_spec = value_spec
        self.env_seed = int(env_seed)
        self.rng = np.random.default_rng(noise_seed)
        self.episodes = 0
        self._ep_return = 0.0
        self._obs = env.reset(self.env_seed).observation

    def _value(self, value_params, obs):
        if self.value_spec is None:
            return 0.0
        return float(forward(self.value_spec, value_params, obs)[0])

    def rollout(self, policy_flat, value_flat=None, T: int = 128, version: int = 0) -> TrajectorySegment:
        pol = self.policy
        value_params = unflatten(self.value_spec, value_flat) if self.value_spec is not None else None
        obs_l, act_l, rew_l, logp_l, val_l, done_l, mean_l, finished = [], [], [], [], [], [], [], []
        for _ in range(T):
            obs = self._obs
            a, logp, mu = pol.act(policy_flat, obs, self.rng)
            val_l.append(self._value(value_params, obs))
            state, r = self.env.step(a)
            obs_l.append(obs)
            act_l.append(a)
            rew_l.append(r)
            logp_l.append(logp)
            mean_l.append(mu)
            done_l.append(state.done)
            self._ep_return += r
            if state.done:
                finished.append(self._ep_return)
                self._ep_return = 0.0
                self.episodes += 1
                self._obs = self.env.reset(self.env_seed + self.episodes).observation
            else:
                self._obs = state.observation
        last_value = 0.0 if done_l[-1] else self._value(value_params, self._obs)
        return TrajectorySegment(
            obs=np.array(obs_l), actions=np.array(act_l), rewards=np.array(rew_l), logp=np.array(logp_l),
            values=np.array(val_l), dones=np.array(done_l), means=np.array(mean_l),
            log_std=np.array(pol.log_std(policy_flat)), version=version, last_value=last_value,
            episode_returns=finished,
        )


def rollout(policy: GaussianPolicy, policy_flat, env: Env, T: int, env_seed: int = 0, noise_seed: int = 0,
            value_spec: MlpSpec | None = None, value_flat=None, version: int = 0) -> TrajectorySegment:
    """One segment of ``T`` steps from a freshly reset environment."""
    worker = RolloutWorker(env, policy, value_spec, env_seed, noise_seed)
    return worker.rollout(policy_flat, value_flat, T, version)


def evaluate(policy: GaussianPolicy, policy_flat, env: Env, seeds, deterministic: bool = True,
             noise_seed: int = 0, action_fn=None) -> np.ndarray:
    """Episodic returns from one episode per seed, acting on the mean by default."""
    rng = np.random.default_rng(noise_seed)
    out = []
    for seed in seeds:
        obs = env.reset(int(seed)).observation
        total, done = 0.0, False
        while not done:
            if deterministic:
                a = policy.mean(policy_flat, obs)
            else:
                a = policy.act(policy_flat, obs, rng)[0]
            if action_fn is not None:
                a = action_fn(a)
            state, r = env.step(a)
            total += r
            obs, done = state.observation, state.done
        out.append(total)
    return np.array(out)
