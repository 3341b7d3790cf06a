import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minisurreal.envs import EnvContractError, Pendulum, PointMass2D, UnknownEnvError, env_ids, get_spec, make
from minisurreal.envs.pendulum import REWARD_FLOOR


@pytest.mark.parametrize("env_id", ["pointmass2d", "pendulum"])
def test_reset_deterministic(env_id):
    a, b = make(env_id), make(env_id)
    np.testing.assert_array_equal(a.reset(11).observation, b.reset(11).observation)
    assert not np.array_equal(a.reset(11).observation, a.reset(12).observation)


def test_specs():
    pm, pd = get_spec("pointmass2d"), get_spec("pendulum")
    assert (pm.obs_dim, pm.act_dim, pm.horizon, pm.dt) == (6, 2, 100, 0.05)
    assert (pd.obs_dim, pd.act_dim, pd.horizon, pd.dt) == (3, 1, 200, 0.05)
    assert make("pointmass2d").reset(0).observation.shape == (6,)
    assert env_ids() == ["pendulum", "pointmass2d"]


def test_unknown_env_lists_valid():
    with pytest.raises(UnknownEnvError, match="pendulum, pointmass2d"):
        make("cheetah")


def test_pointmass_reset_ranges():
    env = PointMass2D()
    for seed in range(50):
        obs = env.reset(seed).observation
        assert np.all(np.abs(obs[:2]) <= 1) and np.all(obs[2:4] == 0)
        np.testing.assert_array_equal(obs[4:], np.array([1.0, 1.0]) - obs[:2])


def test_pendulum_unit_circle():
    env = Pendulum()
    for seed in range(50):
        c, s, w = env.reset(seed).observation
        assert abs(c * c + s * s - 1) <= 1e-12
        assert -1 <= w <= 1


def test_pointmass_at_goal():
    env = PointMass2D()
    env.set_state((1.0, 1.0))
    state, reward = env.step([0.0, 0.0])
    assert reward == 10.0 and state.done


def test_pointmass_euler_step():
    env = PointMass2D()
    env.set_state((0.0, 0.0))
    state, reward = env.step([1.0, 0.0])
    np.testing.assert_allclose(state.observation[:4], [0.0025, 0.0, 0.05, 0.0], rtol=0, atol=1e-15)
    assert reward == pytest.approx(-((0.0025 - 1) ** 2 + 1) - 0.01)


def test_pointmass_action_clipped():
    env = PointMass2D()
    env.set_state((0.0, 0.0))
    s1, _ = env.step([5.0, -7.0])
    np.testing.assert_allclose(s1.observation[2:4], [0.05, -0.05])


def test_pendulum_upright_equilibrium():
    env = Pendulum()
    env.set_state(0.0, 0.0)
    for _ in range(10):
        state, reward = env.step([0.0])
        assert reward == 0.0
        assert env.theta == 0.0 and env.omega == 0.0


def test_pendulum_speed_clipped():
    env = Pendulum()
    env.set_state(1.0, 7.9)
    for _ in range(20):
        env.step([2.0])
        assert abs(env.omega) <= 8.0


def test_step_after_done():
    env = PointMass2D()
    env.set_state((1.0, 1.0))
    env.step([0, 0])
    with pytest.raises(EnvContractError):
        env.step([0, 0])


def test_wrong_action_dim():
    env = Pendulum()
    env.reset(0)
    with pytest.raises(EnvContractError):
        env.step([0.0, 0.0])


@pytest.mark.parametrize("env_id", ["pointmass2d", "pendulum"])
def test_episode_length_bounded(env_id):
    env = make(env_id)
    env.reset(3)
    rng = np.random.default_rng(0)
    steps = 0
    while not env.done:
        env.step(rng.uniform(-3, 3, size=env.spec.act_dim))
        steps += 1
    assert steps == env.spec.horizon


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_pendulum_reward_bounds_and_determinism(seed, action_seed):
    def run():
        env = Pendulum()
        env.reset(seed)
        rng = np.random.default_rng(action_seed)
        out = []
        while not env.done:
            state, r = env.step(rng.uniform(-4, 4, size=1))
            out.append((state.observation.tobytes(), r))
        return out

    first = run()
    assert first == run()
    assert all(REWARD_FLOOR <= r <= 0 for _, r in first)
