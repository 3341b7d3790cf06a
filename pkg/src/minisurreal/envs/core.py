"""Environment contract shared by the built-in tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EnvContractError(RuntimeError):
    """Raised when an environment is driven outside its contract."""


class UnknownEnvError(KeyError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    id: str
    obs_dim: int
    act_dim: int
    action_low: tuple
    action_high: tuple
    horizon: int
    dt: float

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        lo, hi = np.asarray(self.action_low, float), np.asarray(self.action_high, float)
        if lo.shape != (self.act_dim,) or hi.shape != (self.act_dim,):
            raise ValueError("action bounds must have one entry per action dimension")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ValueError("action bounds must be finite with low < high")

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.action_low, dtype=np.float64)

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.action_high, dtype=np.float64)


@dataclass(frozen=True)
class EnvState:
    observation: np.ndarray
    step_index: int
    done: bool


class Env:
    """Base class: subclasses define ``spec``, ``_reset`` and ``_step``."""

    spec: EnvSpec

    def __init__(self):
        self.t = 0
        self.done = True
        self._low = self.spec.low
        self._high = self.spec.high

    def reset(self, seed=None) -> EnvState:
        self._reset(np.random.default_rng(seed))
        self.t = 0
        self.done = False
        return self.state()

    def state(self) -> EnvState:
        return EnvState(self._obs(), self.t, self.done)

    def step(self, action) -> tuple[EnvState, float]:
        if self.done:
            raise EnvContractError("step() after the episode ended; call reset()")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != self._low.shape:
            raise EnvContractError(f"action has {a.size} entries, expected {self.spec.act_dim}")
        # NaN survives minimum/maximum, so one finiteness check covers the clipped value
        a = np.minimum(np.maximum(a, self._low), self._high)
        if not np.isfinite(a.sum()):
            raise EnvContractError("non-finite action")
        reward, terminal = self._step(a)
        self.t += 1
        self.done = terminal or self.t >= self.spec.horizon
        return self.state(), float(reward)

    def _reset(self, rng: np.random.Generator):
        raise NotImplementedError

    def _step(self, a: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError

    def _obs(self) -> np.ndarray:
        raise NotImplementedError
