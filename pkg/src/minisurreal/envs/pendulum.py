"""Torque-limited pendulum swing-up, angle measured from upright."""

import numpy as np

from .core import Env, EnvSpec

G, M, L = 10.0, 1.0, 1.0
MAX_SPEED = 8.0
MAX_TORQUE = 2.0

SPEC = EnvSpec("pendulum", obs_dim=3, act_dim=1, action_low=(-MAX_TORQUE,), action_high=(MAX_TORQUE,),
               horizon=200, dt=0.05)

REWARD_FLOOR = -(np.pi**2 + 0.1 * MAX_SPEED**2 + 0.001 * MAX_TORQUE**2)


def wrap(theta: float) -> float:
    """Map an angle to [-pi, pi)."""
    return ((theta + np.pi) % (2 * np.pi)) - np.pi


class Pendulum(Env):
    """Pendulum with reward charged on the state the action is applied in.

    Gravity is written as ``+sin(theta)`` rather than the equivalent
    ``-sin(theta + pi)`` so that upright is an exact fixed point in
    floating point.
    """

    spec = SPEC

    def __init__(self):
        super().__init__()
        self.theta = 0.0
        self.omega = 0.0

    def _reset(self, rng):
        self.theta = float(rng.uniform(-np.pi, np.pi))
        self.omega = float(rng.uniform(-1.0, 1.0))

    def set_state(self, theta, omega=0.0):
        self.theta = float(theta)
        self.omega = float(omega)
        self.t = 0
        self.done = False
        return self.state()

    def _step(self, a):
        u = float(a[0])
        dt = self.spec.dt
        reward = -(wrap(self.theta) ** 2 + 0.1 * self.omega**2 + 0.001 * u**2)
        accel = 3 * G / (2 * L) * np.sin(self.theta) + 3.0 / (M * L**2) * u
        self.omega = float(np.clip(self.omega + accel * dt, -MAX_SPEED, MAX_SPEED))
        self.theta = self.theta + self.omega * dt
        return reward, False

    def _obs(self):
        return np.array([np.cos(self.theta), np.sin(self.theta), self.omega])
