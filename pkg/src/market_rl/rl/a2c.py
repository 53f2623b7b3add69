"""Synchronous advantage actor-critic."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..nn import AdamState, adam_step, clip_by_global_norm, log_softmax
from ..stats import explained_variance
from .common import MetricsLog, RolloutBuffer, VecEnv, compute_returns_and_gae
from .policies import ActorCriticPolicy
from .ppo import TrainResult, _seeds, collect_rollout


@dataclass(frozen=True)
class A2cConfig:
    gamma: float = 0.99
    n_steps: int = 5
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    learning_rate: float = 1e-4
    max_grad_norm: float = 0.5
    reward_scale: float = 1.0
    log_interval: int = 100

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.n_steps < 1 or self.log_interval < 1:
            raise ValueError("n_steps and log_interval must be >= 1")
        if self.learning_rate < 0 or self.reward_scale <= 0:
            raise ValueError("learning_rate must be >= 0 and reward_scale > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def a2c_update(buffer: RolloutBuffer, policy: ActorCriticPolicy, optimizer: AdamState,
               cfg: A2cConfig) -> dict:
    """One Adam step on the n-step actor and critic losses.

    ``buffer.returns`` must hold the bootstrapped n-step returns.
    """
    obs = buffer.flat("observations")
    actions = buffer.flat("actions")
    returns = buffer.flat("returns")
    n = len(actions)

    values = policy.value_net.forward(obs)[:, 0]
    advantages = returns - values  # constant w.r.t. the actor
    logits = policy.policy_net.forward(obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    rows = np.arange(n)
    logp = logp_all[rows, actions]
    entropy_each = -np.sum(probs * logp_all, axis=-1)

    policy_loss = -float(np.mean(logp * advantages))
    value_loss = float(np.mean(advantages ** 2))

    onehot = np.zeros_like(logits)
    onehot[rows, actions] = 1.0
    d_logits = (-advantages / n)[:, None] * (onehot - probs)
    if cfg.entropy_coef:
        d_logits += (cfg.entropy_coef / n) * probs * (logp_all + entropy_each[:, None])
    pol_grads, _ = policy.policy_net.backward(d_logits)
    val_grads, _ = policy.value_net.backward(((cfg.value_coef * 2.0 / n) * (values - returns))[:, None])
    grads, _ = clip_by_global_norm(pol_grads + val_grads, cfg.max_grad_norm)
    adam_step(optimizer, policy.params, grads)
    return {"policy_loss": policy_loss, "value_loss": value_loss,
            "entropy": float(np.mean(entropy_each)), "actor_grads": pol_grads}


def train(make_env, total_steps: int, cfg: A2cConfig = A2cConfig(), seed: int = 0, n_envs: int = 1,
          metrics_path=None, on_update=None) -> TrainResult:
    init_rng, sample_rng, _, env_seeds = _seeds(seed, n_envs)
    vec = VecEnv([make_env() for _ in range(n_envs)], env_seeds)
    policy = ActorCriticPolicy(vec.obs_size, vec.n_actions, init_rng,
                               action_offset=getattr(vec.envs[0], "action_offset", 0))
    optimizer = AdamState.for_params(policy.params, learning_rate=cfg.learning_rate)
    buffer = RolloutBuffer(cfg.n_steps, n_envs, vec.obs_size)
    log = MetricsLog(metrics_path)
    per_update = cfg.n_steps * n_envs
    n_updates = math.ceil(total_steps / per_update)
    window: dict = {"reward": [], "value_loss": [], "entropy": [], "returns": [], "values": []}
    steps = 0
    for i in range(n_updates):
        window["reward"].append(collect_rollout(vec, policy, buffer, sample_rng, cfg.reward_scale))
        steps += per_update
        # lambda = 1 turns the estimator into the bootstrapped n-step return
        compute_returns_and_gae(buffer, policy.value(vec.obs), cfg.gamma, 1.0)
        diag = a2c_update(buffer, policy, optimizer, cfg)
        window["value_loss"].append(diag["value_loss"])
        window["entropy"].append(diag["entropy"])
        window["returns"].append(buffer.flat("returns"))
        window["values"].append(buffer.flat("values"))
        if (i + 1) % cfg.log_interval == 0 or i == n_updates - 1:
            rets = np.concatenate(window["returns"])
            vals = np.concatenate(window["values"])
            log.append(update_index=i, env_steps=steps, mean_reward=float(np.mean(window["reward"])),
                       value_loss=float(np.mean(window["value_loss"])), approx_kl=None,
                       explained_variance=explained_variance(rets, vals) if rets.size > 1 else None,
                       entropy=float(np.mean(window["entropy"])), clip_fraction=None)
            window = {k: [] for k in window}
        if on_update is not None:
            on_update(i, policy, optimizer)
    return TrainResult(policy, optimizer, log, steps, vec.finished_returns)
