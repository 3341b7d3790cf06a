"""PPO with an adaptive KL penalty: loss, exact gradient and the lambda rule."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..nnet import GaussianPolicy, MlpSpec, NumericError, backward, flatten, forward, gaussian_kl, gaussian_logprob, unflatten

VALUE_COEF = 0.5


@dataclass(frozen=True)
class KLState:
    lam: float = 1.0
    target: float = 0.01
    alpha: float = 1.5
    low: float = 0.5
    high: float = 2.0
    clamp: tuple = (1e-4, 1e4)

    def __post_init__(self):
        lo, hi = self.clamp
        if not (self.target > 0 and self.alpha > 1 and 0 < self.low <= self.high and 0 < lo <= hi):
            raise ValueError("invalid adaptive-KL constants")
        if not lo <= self.lam <= hi:
            raise ValueError(f"lambda {self.lam} outside clamp {self.clamp}")


def adapt_kl(state: KLState, realized_kl: float) -> KLState:
    """Grow lambda when KL overshoots the band, shrink it when KL undershoots."""
    if realized_kl < 0:
        raise ValueError("realized KL must be non-negative")
    lo, hi = state.clamp
    if realized_kl > state.high * state.target:
        return replace(state, lam=min(state.lam * state.alpha, hi))
    if realized_kl < state.low * state.target:
        return replace(state, lam=max(state.lam / state.alpha, lo))
    return state


@dataclass
class PPOBatch:
    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    means_old: np.ndarray
    log_std_old: np.ndarray  # (B, act_dim) or (act_dim,)
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.advantages)

    def take(self, idx) -> "PPOBatch":
        ls = self.log_std_old if self.log_std_old.ndim == 1 else self.log_std_old[idx]
        return PPOBatch(self.obs[idx], self.actions[idx], self.logp_old[idx], self.means_old[idx], ls,
                        self.advantages[idx], self.returns[idx])


class PPOModel:
    """Policy and value networks sharing one flat vector: policy part first."""

    def __init__(self, policy: GaussianPolicy, value_spec: MlpSpec):
        if value_spec.n_out != 1 or value_spec.output != "linear":
            raise ValueError("value network must have one linear output")
        self.policy = policy
        self.value_spec = value_spec
        self.n_policy = policy.param_count

    @property
    def param_count(self) -> int:
        return self.n_policy + self.value_spec.param_count

    def split(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return theta[:self.n_policy], theta[self.n_policy:]

    def loss_and_grad(self, theta, batch: PPOBatch, kl: KLState):
        """Return ``(loss, grad, realized_kl)`` for one minibatch.

        loss = -mean(ratio * A) + lambda * mean KL[old || new] + 0.5 * mean (V - R)^2
        """
        pol = self.policy
        pflat, vflat = self.split(theta)
        B = len(batch)
        mu = pol.mean(pflat, batch.obs)
        log_std = pol.log_std(pflat)
        logp = gaussian_logprob(mu, log_std, batch.actions)
        ratio = np.exp(logp - batch.logp_old)
        kls = gaussian_kl(batch.means_old, batch.log_std_old, mu, log_std)
        vparams = unflatten(self.value_spec, vflat)
        v = forward(self.value_spec, vparams, batch.obs)[:, 0]
        verr = v - batch.returns
        surrogate = float(np.mean(ratio * batch.advantages))
        realized = float(np.mean(kls))
        loss = -surrogate + kl.lam * realized + VALUE_COEF * float(np.mean(verr * verr))
        if not np.isfinite(loss):
            raise NumericError("non-finite PPO loss")

        inv_var = np.exp(-2.0 * log_std)
        # d loss / d logp per sample, then chain through the Gaussian density
        w = -(ratio * batch.advantages) / B
        g_mu = w[:, None] * (batch.actions - mu) * inv_var
        g_ls = w[:, None] * ((batch.actions - mu) ** 2 * inv_var - 1.0)
        diff = mu - batch.means_old
        g_mu += (kl.lam / B) * diff * inv_var
        g_ls += (kl.lam / B) * (1.0 - np.exp(2.0 * (batch.log_std_old - log_std)) - diff * diff * inv_var)

        grad_policy = pol.mean_backward(pflat, batch.obs, g_mu)
        if pol.trainable_std:
            grad_policy = np.concatenate([grad_policy, g_ls.sum(axis=0)])
        vgrads, _ = backward(self.value_spec, vparams, batch.obs, (2 * VALUE_COEF / B * verr)[:, None])
        grad = np.concatenate([grad_policy, flatten(vgrads)])
        return loss, grad, realized


class Adam:
    """Adam with global gradient-norm clipping, operating on flat vectors."""

    def __init__(self, size: int, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8, clip: float | None = 5.0):
        self.lr, self.eps, self.clip = lr, eps, clip
        self.b1, self.b2 = betas
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad) -> np.ndarray:
        """Return the parameters after one descent step on ``grad``."""
        g = clip_norm(grad, self.clip) if self.clip else np.asarray(grad)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_norm(g, max_norm: float) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    n = float(np.linalg.norm(g))
    return g * (max_norm / n) if n > max_norm else g


def batch_from_segments(segments, gamma: float, normalize_adv: bool = True) -> PPOBatch:
    """Concatenate segments into one batch with returns and advantages."""
    from .segments import compute_returns_and_advantages, normalize

    rets, advs = [], []
    for seg in segments:
        r, a = compute_returns_and_advantages(seg.rewards, seg.values, seg.dones, gamma, seg.last_value)
        rets.append(r)
        advs.append(a)
    adv = np.concatenate(advs)
    if normalize_adv:
        adv = normalize(adv)
    log_std = np.concatenate([np.broadcast_to(s.log_std, s.means.shape) for s in segments])
    return PPOBatch(
        obs=np.concatenate([s.obs for s in segments]),
        actions=np.concatenate([s.actions for s in segments]),
        logp_old=np.concatenate([s.logp for s in segments]),
        means_old=np.concatenate([s.means for s in segments]),
        log_std_old=log_std,
        advantages=adv,
        returns=np.concatenate(rets),
    )
