"""Point mass on a plane that must reach a fixed goal."""

import math

import numpy as np

from .core import Env, EnvSpec

GOAL = np.array([1.0, 1.0])  # the scalar code below hard-codes these coordinates
SUCCESS_RADIUS = 0.05
SUCCESS_BONUS = 10.0
ACTION_COST = 0.01

SPEC = EnvSpec("pointmass2d", obs_dim=6, act_dim=2, action_low=(-1.0, -1.0), action_high=(1.0, 1.0),
               horizon=100, dt=0.05)


class PointMass2D(Env):
    """Double integrator with semi-implicit Euler steps.

    The reward is the negative squared distance after the step minus a
    small action cost.  Reaching within 0.05 of the goal ends the episode
    and adds a bonus of 10.  State is kept in Python floats because numpy
    overhead dominates at two dimensions.
    """

    spec = SPEC

    def __init__(self):
        super().__init__()
        self._p = [0.0, 0.0]
        self._v = [0.0, 0.0]

    @property
    def pos(self) -> np.ndarray:
        return np.array(self._p)

    @property
    def vel(self) -> np.ndarray:
        return np.array(self._v)

    def _reset(self, rng):
        self._p = [float(c) for c in rng.uniform(-1.0, 1.0, size=2)]
        self._v = [0.0, 0.0]

    def set_state(self, pos, vel=(0.0, 0.0)):
        """Place the mass directly (tests and analysis); starts a fresh episode."""
        self._p = [float(pos[0]), float(pos[1])]
        self._v = [float(vel[0]), float(vel[1])]
        self.t = 0
        self.done = False
        return self.state()

    def _step(self, a):
        dt = self.spec.dt
        ax, ay = float(a[0]), float(a[1])
        vx = self._v[0] + ax * dt
        vy = self._v[1] + ay * dt
        px = self._p[0] + vx * dt
        py = self._p[1] + vy * dt
        self._v = [vx, vy]
        self._p = [px, py]
        dx, dy = px - 1.0, py - 1.0
        dist2 = dx * dx + dy * dy
        reward = -dist2 - ACTION_COST * (ax * ax + ay * ay)
        success = math.sqrt(dist2) < SUCCESS_RADIUS
        if success:
            reward += SUCCESS_BONUS
        return reward, success

    def _obs(self):
        px, py = self._p
        return np.array([px, py, self._v[0], self._v[1], 1.0 - px, 1.0 - py])
