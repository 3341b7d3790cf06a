"""Small MLPs with exact gradients and diagonal Gaussian policies."""

from .gaussian import ES_STD, PPO_INIT_LOG_STD, GaussianPolicy, NumericError, gaussian_kl, gaussian_logprob
from .mlp import LINEAR, TANH, MlpSpec, ShapeError, backward, flatten, forward, init_params, unflatten
