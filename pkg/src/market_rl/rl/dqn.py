"""Deep Q-learning with replay, a hard-synced target network and an
epsilon-greedy schedule."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import AdamState, Mlp, adam_step, clip_by_global_norm
from .common import MetricsLog, ReplayBuffer, VecEnv
from .policies import SAMPLE, QPolicy, act
from .ppo import TrainResult, _seeds


@dataclass(frozen=True)
class DqnConfig:
    gamma: float = 0.99
    buffer_size: int = 100_000
    batch_size: int = 32
    target_sync_interval: int = 2000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    exploration_fraction: float = 0.1
    learning_rate: float = 1e-4
    learning_starts: int = 1000
    train_freq: int = 4
    max_grad_norm: float = 10.0
    reward_scale: float = 1.0
    log_interval: int = 2048

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if min(self.buffer_size, self.batch_size, self.target_sync_interval,
               self.train_freq, self.log_interval) < 1:
            raise ValueError("counts must be >= 1")
        if not 0 <= self.exploration_fraction <= 1:
            raise ValueError("exploration_fraction must lie in [0, 1]")
        if self.learning_rate < 0 or self.reward_scale <= 0:
            raise ValueError("learning_rate must be >= 0 and reward_scale > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def epsilon_at(step: int, cfg: DqnConfig, total_steps: int) -> float:
    """Linear decay over the first ``exploration_fraction`` of training."""
    if step < 0:
        raise ValueError("step must be >= 0")
    span = cfg.exploration_fraction * total_steps
    if span <= 0 or step >= span:
        return cfg.epsilon_end
    return cfg.epsilon_start + (step / span) * (cfg.epsilon_end - cfg.epsilon_start)


def dqn_target(rewards, next_obs, dones, target_net: Mlp, gamma: float):
    """Bellman targets ``r + gamma * max_a' Q_target(s', a')``, or ``r`` at terminals."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if gamma == 0:
        return rewards.copy()
    next_q = target_net.forward(np.asarray(next_obs, dtype=np.float64)).max(axis=-1)
    return np.where(dones, rewards, rewards + gamma * next_q)


def dqn_loss_and_grads(batch, q_net: Mlp, target_net: Mlp, gamma: float):
    obs, actions, rewards, next_obs, dones = batch
    y = dqn_target(rewards, next_obs, dones, target_net, gamma)
    q = q_net.forward(obs)
    rows = np.arange(len(actions))
    err = q[rows, actions] - y
    d_q = np.zeros_like(q)
    d_q[rows, actions] = 2.0 * err / len(actions)
    grads, _ = q_net.backward(d_q)
    return float(np.mean(err ** 2)), grads


def dqn_update(buffer: ReplayBuffer, q_net: Mlp, target_net: Mlp, optimizer: AdamState,
               cfg: DqnConfig, rng) -> float:
    """One minibatch regression step towards the target network's Bellman targets."""
    if len(buffer) < cfg.batch_size:
        raise ValueError("replay buffer holds fewer transitions than one batch")
    loss, grads = dqn_loss_and_grads(buffer.sample(cfg.batch_size, rng), q_net, target_net, cfg.gamma)
    grads, _ = clip_by_global_norm(grads, cfg.max_grad_norm)
    adam_step(optimizer, q_net.params, grads)
    return loss


def train(make_env, total_steps: int, cfg: DqnConfig = DqnConfig(), seed: int = 0, n_envs: int = 1,
          metrics_path=None, on_update=None, hidden=None) -> TrainResult:
    """``on_update`` fires at every metrics row (every ``log_interval`` steps)."""
    init_rng, sample_rng, replay_rng, env_seeds = _seeds(seed, n_envs)
    vec = VecEnv([make_env() for _ in range(n_envs)], env_seeds)
    kwargs = {} if hidden is None else {"hidden": hidden}
    policy = QPolicy(vec.obs_size, vec.n_actions, init_rng,
                     action_offset=getattr(vec.envs[0], "action_offset", 0), **kwargs)
    target = policy.q_net.copy()
    optimizer = AdamState.for_params(policy.params, learning_rate=cfg.learning_rate)
    replay = ReplayBuffer(cfg.buffer_size, vec.obs_size)
    log = MetricsLog(metrics_path)

    steps = 0
    calls = 0
    row = 0
    next_sync = cfg.target_sync_interval
    next_log = cfg.log_interval
    rewards_window, losses = [], []
    while steps < total_steps:
        policy.epsilon = epsilon_at(steps, cfg, total_steps)
        obs = vec.obs
        idx = np.asarray(act(policy, obs, sample_rng, SAMPLE)) - policy.action_offset
        _, rewards, term, _, final_obs = vec.step(idx + policy.action_offset)
        for i in range(vec.n):
            replay.add(obs[i], idx[i], rewards[i] * cfg.reward_scale, final_obs[i], term[i])
        steps += vec.n
        calls += 1
        rewards_window.append(float(rewards.mean()))
        if steps >= cfg.learning_starts and calls % cfg.train_freq == 0 and len(replay) >= cfg.batch_size:
            losses.append(dqn_update(replay, policy.q_net, target, optimizer, cfg, replay_rng))
        if steps >= next_sync:
            target.load_from(policy.q_net)
            next_sync += cfg.target_sync_interval
        if steps >= next_log or steps >= total_steps:
            log.append(update_index=row, env_steps=steps, mean_reward=float(np.mean(rewards_window)),
                       value_loss=float(np.mean(losses)) if losses else None, approx_kl=None,
                       explained_variance=None, entropy=None, clip_fraction=None)
            if on_update is not None:
                on_update(row, policy, optimizer)
            row += 1
            next_log += cfg.log_interval
            rewards_window, losses = [], []
    policy.epsilon = 0.0
    return TrainResult(policy, optimizer, log, steps, vec.finished_returns)
