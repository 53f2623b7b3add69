"""Proximal policy optimization with a clipped surrogate."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..nn import AdamState, adam_step, clip_by_global_norm, log_softmax
from ..stats import explained_variance
from .common import MetricsLog, RolloutBuffer, VecEnv, compute_returns_and_gae, make_rng
from .policies import SAMPLE, ActorCriticPolicy, act


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    rollout_length: int = 2048
    minibatch: int = 64
    epochs: int = 10
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    learning_rate: float = 1e-4
    normalize_advantage: bool = True
    reward_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if min(self.rollout_length, self.minibatch, self.epochs) < 1:
            raise ValueError("rollout_length, minibatch and epochs must be >= 1")
        if self.learning_rate < 0 or self.reward_scale <= 0:
            raise ValueError("learning_rate must be >= 0 and reward_scale > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PpoBatch:
    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def clipped_surrogate(ratio, advantages, clip_epsilon):
    """Per-sample ``min(r A, clip(r, 1-eps, 1+eps) A)``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return np.minimum(ratio * advantages, clipped * advantages)


def _loss_and_grads(batch: PpoBatch, policy: ActorCriticPolicy, cfg: PpoConfig, need_grads=True):
    n = len(batch.actions)
    adv = np.asarray(batch.advantages, dtype=np.float64)
    if cfg.normalize_advantage and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    logits = policy.policy_net.forward(batch.obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    rows = np.arange(n)
    new_logp = logp_all[rows, batch.actions]
    log_ratio = new_logp - batch.old_log_probs
    ratio = np.exp(log_ratio)

    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv
    policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))
    entropy_each = -np.sum(probs * logp_all, axis=-1)
    entropy = float(np.mean(entropy_each))

    values = policy.value_net.forward(batch.obs)[:, 0]
    value_err = values - batch.returns
    value_loss = float(np.mean(value_err ** 2))

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    diag = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(batch.old_log_probs - new_logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_epsilon)),
    }
    if not need_grads:
        return loss, diag, None

    # gradient flows through the unclipped branch only where it is the minimum
    active = unclipped <= clipped
    d_logp = -(adv * ratio * active) / n
    onehot = np.zeros_like(logits)
    onehot[rows, batch.actions] = 1.0
    d_logits = d_logp[:, None] * (onehot - probs)
    if cfg.entropy_coef:
        d_logits += (cfg.entropy_coef / n) * probs * (logp_all + entropy_each[:, None])
    pol_grads, _ = policy.policy_net.backward(d_logits)

    d_values = (cfg.value_coef * 2.0 / n) * value_err
    val_grads, _ = policy.value_net.backward(d_values[:, None])
    return loss, diag, pol_grads + val_grads


def ppo_loss(batch: PpoBatch, policy: ActorCriticPolicy, cfg: PpoConfig):
    """Scalar loss and diagnostics (clip_fraction, approx_kl, entropy, value_loss)."""
    loss, diag, _ = _loss_and_grads(batch, policy, cfg, need_grads=False)
    return loss, diag


def ppo_update(buffer: RolloutBuffer, policy: ActorCriticPolicy, optimizer: AdamState,
               cfg: PpoConfig, rng) -> dict:
    """Several epochs of shuffled minibatch Adam steps on one full rollout."""
    if buffer.advantages is None:
        raise ValueError("compute advantages before updating")
    obs = buffer.flat("observations")
    actions = buffer.flat("actions")
    old_logp = buffer.flat("log_probs")
    advantages = buffer.flat("advantages")
    returns = buffer.flat("returns")
    n = len(actions)
    sums: dict = {}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            batch = PpoBatch(obs[idx], actions[idx], old_logp[idx], advantages[idx], returns[idx])
            _, diag, grads = _loss_and_grads(batch, policy, cfg)
            grads, _ = clip_by_global_norm(grads, cfg.max_grad_norm)
            adam_step(optimizer, policy.params, grads)
            for k, v in diag.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
    out = {k: v / count for k, v in sums.items()}
    out["explained_variance"] = explained_variance(buffer.flat("returns"), buffer.flat("values"))
    return out


@dataclass
class TrainResult:
    policy: object
    optimizer: AdamState
    metrics: MetricsLog
    env_steps: int
    episode_returns: list


def _seeds(seed, n_envs):
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init, sample, shuffle, envs = root.spawn(4)
    env_seeds = [int(s.generate_state(1)[0]) for s in envs.spawn(n_envs)]
    return make_rng(init), make_rng(sample), make_rng(shuffle), env_seeds


def collect_rollout(vec: VecEnv, policy, buffer: RolloutBuffer, rng, reward_scale=1.0) -> float:
    """Fill ``buffer`` from ``vec``; returns the mean unscaled step reward."""
    buffer.reset()
    total = 0.0
    while not buffer.full:
        obs = vec.obs
        logits = policy.logits(obs)
        values = policy.value(obs)
        idx = np.asarray(act(policy, obs, rng, SAMPLE)) - policy.action_offset
        logp = log_softmax(logits)[np.arange(len(idx)), idx]
        _, rewards, term, trunc, final_obs = vec.step(idx + policy.action_offset)
        boot = np.zeros(vec.n)
        if trunc.any():
            boot[trunc] = policy.value(final_obs[trunc])
        buffer.add(obs, idx, rewards * reward_scale, values, logp, term, trunc, boot)
        total += float(rewards.sum())
    return total / (buffer.capacity * buffer.n_envs)


def train(make_env, total_steps: int, cfg: PpoConfig = PpoConfig(), seed: int = 0, n_envs: int = 1,
          metrics_path=None, on_update=None) -> TrainResult:
    """Run PPO for ``ceil(total_steps / rollout_length)`` updates.

    ``make_env()`` must return a fresh environment; ``on_update(i, policy,
    optimizer)`` is called after every update (used for periodic checkpoints).
    """
    if cfg.rollout_length % n_envs:
        raise ValueError("rollout_length must be divisible by n_envs")
    init_rng, sample_rng, shuffle_rng, env_seeds = _seeds(seed, n_envs)
    vec = VecEnv([make_env() for _ in range(n_envs)], env_seeds)
    policy = ActorCriticPolicy(vec.obs_size, vec.n_actions, init_rng,
                               action_offset=getattr(vec.envs[0], "action_offset", 0))
    optimizer = AdamState.for_params(policy.params, learning_rate=cfg.learning_rate)
    buffer = RolloutBuffer(cfg.rollout_length // n_envs, n_envs, vec.obs_size)
    log = MetricsLog(metrics_path)
    n_updates = math.ceil(total_steps / cfg.rollout_length)
    steps = 0
    for i in range(n_updates):
        mean_reward = collect_rollout(vec, policy, buffer, sample_rng, cfg.reward_scale)
        steps += cfg.rollout_length
        compute_returns_and_gae(buffer, policy.value(vec.obs), cfg.gamma, cfg.gae_lambda)
        diag = ppo_update(buffer, policy, optimizer, cfg, shuffle_rng)
        log.append(update_index=i, env_steps=steps, mean_reward=mean_reward,
                   value_loss=diag["value_loss"], approx_kl=diag["approx_kl"],
                   explained_variance=diag["explained_variance"], entropy=diag["entropy"],
                   clip_fraction=diag["clip_fraction"])
        if on_update is not None:
            on_update(i, policy, optimizer)
    return TrainResult(policy, optimizer, log, steps, vec.finished_returns)
