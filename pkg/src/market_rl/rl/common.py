"""Rollout machinery shared by the algorithms."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

METRIC_COLUMNS = ("update_index", "env_steps", "mean_reward", "value_loss", "approx_kl",
                  "explained_variance", "entropy", "clip_fraction")


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


class VecEnv:
    """N independent environments stepped in lockstep with automatic reset.

    Each environment is reset once with its own seed and keeps its own random
    stream afterwards, so the whole batch is reproducible from the seed list.
    """

    def __init__(self, envs, seeds):
        if len(envs) != len(seeds) or not envs:
            raise ValueError("need one seed per environment")
        self.envs = list(envs)
        self.obs = np.stack([env.reset(int(s)) for env, s in zip(self.envs, seeds)])
        self.episode_returns = np.zeros(len(self.envs))
        self.finished_returns: list = []

    @property
    def n(self) -> int:
        return len(self.envs)

    @property
    def obs_size(self) -> int:
        return self.obs.shape[1]

    @property
    def n_actions(self) -> int:
        return self.envs[0].n_actions

    def step(self, actions):
        """Returns ``(next_obs, rewards, terminated, truncated, final_obs)``.

        ``next_obs`` already holds the first observation of a new episode
        wherever one ended; ``final_obs`` keeps the pre-reset observation.
        """
        n = self.n
        rewards = np.zeros(n)
        terminated = np.zeros(n, dtype=bool)
        truncated = np.zeros(n, dtype=bool)
        final_obs = np.empty_like(self.obs)
        next_obs = np.empty_like(self.obs)
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            res = env.step(int(a))
            rewards[i] = res.reward
            terminated[i] = res.terminated
            truncated[i] = res.truncated and not res.terminated
            final_obs[i] = res.observation
            self.episode_returns[i] += res.reward
            if res.terminated or res.truncated:
                self.finished_returns.append(self.episode_returns[i])
                self.episode_returns[i] = 0.0
                next_obs[i] = env.reset()
            else:
                next_obs[i] = res.observation
        self.obs = next_obs
        return next_obs, rewards, terminated, truncated, final_obs


@dataclass
class RolloutBuffer:
    """Fixed-capacity trajectory storage, shaped ``(steps, n_envs)``.

    ``bootstrap_values`` holds V(final observation) at truncation points so
    the return estimate continues past the cut instead of treating it as a
    terminal state.
    """
    capacity: int
    n_envs: int
    obs_size: int

    def __post_init__(self):
        shape = (self.capacity, self.n_envs)
        self.observations = np.zeros(shape + (self.obs_size,))
        self.actions = np.zeros(shape, dtype=np.int64)
        self.rewards = np.zeros(shape)
        self.values = np.zeros(shape)
        self.log_probs = np.zeros(shape)
        self.terminated = np.zeros(shape, dtype=bool)
        self.truncated = np.zeros(shape, dtype=bool)
        self.bootstrap_values = np.zeros(shape)
        self.advantages = None
        self.returns = None
        self.pos = 0

    @property
    def full(self) -> bool:
        return self.pos == self.capacity

    def add(self, obs, action, reward, value, log_prob, terminated=False, truncated=False,
            bootstrap_value=0.0) -> None:
        if self.full:
            raise IndexError("rollout buffer is full")
        i = self.pos
        self.observations[i] = np.reshape(obs, (self.n_envs, self.obs_size))
        self.actions[i] = action
        self.rewards[i] = reward
        self.values[i] = value
        self.log_probs[i] = log_prob
        self.terminated[i] = terminated
        self.truncated[i] = truncated
        self.bootstrap_values[i] = bootstrap_value
        self.pos += 1

    def reset(self) -> None:
        self.pos = 0
        self.advantages = self.returns = None

    def flat(self, name):
        arr = getattr(self, name)
        return arr.reshape((self.capacity * self.n_envs,) + arr.shape[2:])


def compute_returns_and_gae(buffer: RolloutBuffer, last_value, gamma: float, gae_lambda: float):
    """GAE advantages and value targets, filled into the buffer and returned."""
    if not buffer.full:
        raise ValueError("buffer must be full before computing advantages")
    T = buffer.capacity
    adv = np.zeros((T, buffer.n_envs))
    gae = np.zeros(buffer.n_envs)
    next_value = np.broadcast_to(np.asarray(last_value, dtype=np.float64), (buffer.n_envs,))
    for t in reversed(range(T)):
        term = buffer.terminated[t]
        trunc = buffer.truncated[t]
        boundary = term | trunc
        nv = np.where(trunc, buffer.bootstrap_values[t], np.where(term, 0.0, next_value))
        delta = buffer.rewards[t] + gamma * nv - buffer.values[t]
        gae = delta + gamma * gae_lambda * np.where(boundary, 0.0, gae)
        adv[t] = gae
        next_value = buffer.values[t]
    buffer.advantages = adv
    buffer.returns = adv + buffer.values
    return buffer.advantages, buffer.returns


class ReplayBuffer:
    """Ring buffer of ``(s, a, r, s', done)`` with uniform sampling."""

    def __init__(self, capacity: int, obs_size: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size))
        self.next_obs = np.zeros((capacity, obs_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = done
        self.inserted += 1

    def sample_indices(self, batch_size: int, rng) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, len(self), size=batch_size)

    def sample(self, batch_size: int, rng):
        idx = self.sample_indices(batch_size, rng)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


class MetricsLog:
    """Per-update diagnostics, optionally mirrored to a CSV file."""

    def __init__(self, path=None):
        self.rows: list = []
        self.path = path
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerow(METRIC_COLUMNS)

    def append(self, **row) -> None:
        row = {k: row.get(k) for k in METRIC_COLUMNS}
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerow([_fmt(row[k]) for k in METRIC_COLUMNS])

    def column(self, name):
        return [r[name] for r in self.rows]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_metrics(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (None if r[k] == "" else (int(r[k]) if k in ("update_index", "env_steps") else float(r[k])))
                    for k in METRIC_COLUMNS})
    return out
