"""Evolution strategies with seed-identified Gaussian perturbations.

A perturbation is named by a 64-bit seed.  Its noise vector is
``numpy.random.default_rng(seed).standard_normal(dim)`` (PCG64 seeded
through SeedSequence), which every process regenerates bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs import Env


class IntegrityError(ValueError):
    """A record refers to a seed the master never issued, or breaks a mirrored pair."""


@dataclass(frozen=True)
class ESConfig:
    sigma: float = 0.02
    population: int = 64
    lr: float = 0.01
    centered: bool = True
    mirrored: bool = False
    action_bins: int | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.mirrored and self.population % 2:
            raise ValueError("mirrored sampling needs an even population")


@dataclass(frozen=True)
class PerturbationRecord:
    seed: int
    ret: float
    actor_id: int = 0
    sign: int = 1

    def to_value(self) -> dict:
        return {"seed": self.seed.to_bytes(8, "little"), "ret": float(self.ret), "actor": int(self.actor_id),
                "sign": int(self.sign)}

    @classmethod
    def from_value(cls, v) -> "PerturbationRecord":
        return cls(int.from_bytes(v["seed"], "little"), float(v["ret"]), int(v["actor"]), int(v["sign"]))


def es_noise(seed: int, dim: int) -> np.ndarray:
    return np.random.default_rng(int(seed)).standard_normal(dim)


def es_perturb(theta, seed: int, sigma: float, sign: int = 1) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    return theta + sign * sigma * es_noise(seed, theta.size)


def draw_seeds(rng: np.random.Generator, n: int) -> list[int]:
    """``n`` distinct 64-bit seeds."""
    seeds: list[int] = []
    seen = set()
    while len(seeds) < n:
        s = int(rng.integers(0, 2**64, dtype=np.uint64))
        if s not in seen:
            seen.add(s)
            seeds.append(s)
    return seeds


def assignments(seeds, config: ESConfig) -> list[tuple[int, int]]:
    """Expand a seed table into ``(seed, sign)`` evaluations."""
    if config.mirrored:
        return [(s, sign) for s in seeds for sign in (1, -1)]
    return [(s, 1) for s in seeds]


def es_gradient_estimate(records, theta, sigma: float, config: ESConfig | None = None, seed_table=None) -> np.ndarray:
    """Monte-Carlo gradient of the Gaussian-smoothed objective.

    Plain form ``(1/(n sigma)) sum J_i eps_i`` with ``J`` optionally
    centered; in mirrored form each pair contributes ``(J+ - J-) eps``
    with the same ``1/(n sigma)`` scaling over ``n`` records.
    """
    config = config or ESConfig(sigma=sigma)
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two records")
    theta = np.asarray(theta, dtype=np.float64)
    if seed_table is not None:
        allowed = set(int(s) for s in seed_table)
        for r in records:
            if r.seed not in allowed:
                raise IntegrityError(f"seed {r.seed} is not in this iteration's table")
    n = len(records)
    g = np.zeros_like(theta)
    if config.mirrored:
        pairs: dict[int, dict[int, float]] = {}
        for r in records:
            pairs.setdefault(r.seed, {})[r.sign] = r.ret
        for seed, by_sign in pairs.items():
            if set(by_sign) != {1, -1}:
                raise IntegrityError(f"seed {seed} lacks its mirrored partner")
            g += (by_sign[1] - by_sign[-1]) * es_noise(seed, theta.size)
    else:
        J = np.array([r.ret for r in records], dtype=np.float64)
        if config.centered:
            # the floating-point mean of equal values need not equal them; keep that case exact
            J = np.zeros_like(J) if np.all(J == J[0]) else J - J.mean()
        for r, j in zip(records, J):
            if j != 0.0:
                g += j * es_noise(r.seed, theta.size)
    return g / (n * sigma)


class DiscretizedActions:
    """Snap each action coordinate to the nearest of ``bins`` evenly spaced centers."""

    def __init__(self, low, high, bins: int = 10):
        if bins < 2:
            raise ValueError("need at least two bins")
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.bins = bins
        self.width = (self.high - self.low) / bins

    def centers(self) -> np.ndarray:
        return self.low[:, None] + (np.arange(self.bins) + 0.5) * self.width[:, None]

    def __call__(self, action) -> np.ndarray:
        a = np.clip(np.asarray(action, dtype=np.float64), self.low, self.high)
        idx = np.minimum(np.floor((a - self.low) / self.width), self.bins - 1)
        return self.low + (idx + 0.5) * self.width


class DiscretizedEnv(Env):
    """Wraps an env so every action passes through :class:`DiscretizedActions`."""

    def __init__(self, env: Env, bins: int = 10):
        super().__init__()
        self.inner = env
        self.spec = env.spec
        self.snap = DiscretizedActions(env.spec.low, env.spec.high, bins)

    def reset(self, seed=None):
        return self.inner.reset(seed)

    def state(self):
        return self.inner.state()

    @property
    def done(self):
        return self.inner.done

    @done.setter
    def done(self, value):
        pass

    def step(self, action):
        return self.inner.step(self.snap(np.asarray(action, dtype=np.float64).reshape(-1)))


def population_returns(policy, thetas, make_env, episode_seed: int, noise_seeds=None,
                       action_fn=None) -> tuple[np.ndarray, np.ndarray]:
    """Run one episode per parameter row, all from the same start state.

    The episodes advance in lockstep so the policy forward pass is one
    batched matrix product per layer instead of one per row.  Returns
    the episodic returns and the episode lengths.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    k = len(thetas)
    envs = [make_env() for _ in range(k)]
    obs = np.stack([e.reset(episode_seed).observation for e in envs])
    layers = [policy.split(t)[0] for t in thetas]
    Ws = [np.stack([lay[i][0] for lay in layers]) for i in range(len(layers[0]))]
    bs = [np.stack([lay[i][1] for lay in layers]) for i in range(len(layers[0]))]
    log_std = np.stack([policy.split(t)[1] for t in thetas])
    rngs = [np.random.default_rng(s) for s in (noise_seeds if noise_seeds is not None else [None] * k)]
    totals = np.zeros(k)
    lengths = np.zeros(k, dtype=np.int64)
    alive = np.ones(k, dtype=bool)
    while alive.any():
        h = obs[:, None, :]
        for W, b in zip(Ws, bs):
            h = np.tanh(h @ W + b[:, None, :])
        mu = policy.center + policy.half * h[:, 0, :]
        std = np.exp(log_std)
        for j in np.flatnonzero(alive):
            a = mu[j] + std[j] * rngs[j].standard_normal(policy.act_dim)
            if action_fn is not None:
                a = action_fn(a)
            state, r = envs[j].step(a)
            totals[j] += r
            lengths[j] += 1
            obs[j] = state.observation
            if state.done:
                alive[j] = False
    return totals, lengths
