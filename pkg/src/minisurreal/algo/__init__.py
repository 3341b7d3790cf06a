"""Distributed PPO and ES built on the channel, orchestration and buffer layers."""

from .config import ESTrainConfig, actor_seeds
from .es import (
    DiscretizedActions,
    DiscretizedEnv,
    ESConfig,
    IntegrityError,
    PerturbationRecord,
    draw_seeds,
    es_gradient_estimate,
    es_noise,
    es_perturb,
    population_returns,
)
from .learner import ESMaster, PPOConfig, PPOLearner, StalenessError, build_model, init_theta
from .ppo import Adam, KLState, PPOBatch, PPOModel, adapt_kl, batch_from_segments, clip_norm
from .segments import (
    RolloutWorker,
    TrajectorySegment,
    compute_returns_and_advantages,
    evaluate,
    normalize,
    rollout,
)
from .train import TrainingAborted, es_train, first_reaching, ppo_train, run_experiment, smoothed_returns
from .workers import read_checkpoint
