"""Deterministic continuous-control tasks."""

from .core import Env, EnvContractError, EnvSpec, EnvState, UnknownEnvError
from .pendulum import Pendulum
from .pointmass import PointMass2D

REGISTRY = {"pointmass2d": PointMass2D, "pendulum": Pendulum}


def env_ids() -> list[str]:
    return sorted(REGISTRY)


def get_spec(env_id: str) -> EnvSpec:
    return _lookup(env_id).spec


def make(env_id: str) -> Env:
    return _lookup(env_id)()


def _lookup(env_id):
    try:
        return REGISTRY[env_id]
    except KeyError:
        raise UnknownEnvError(f"unknown env {env_id!r}; valid: {', '.join(env_ids())}") from None
