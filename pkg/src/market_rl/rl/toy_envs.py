"""Tiny environments with known optimal behaviour, for checking the learners."""
from __future__ import annotations

import numpy as np

from ..env import StepResult


class TwoArmedBandit:
    """Constant observation, one-step episodes; arm 0 pays 1, arm 1 pays 0."""

    n_actions = 2
    obs_size = 1

    def __init__(self, rewards=(1.0, 0.0)):
        self.rewards = tuple(rewards)
        self.n_actions = len(self.rewards)

    def reset(self, seed=None):
        return np.ones(1)

    def step(self, action):
        if not 0 <= action < self.n_actions:
            raise ValueError(f"invalid arm {action}")
        return StepResult(np.ones(1), self.rewards[int(action)], False, terminated=True)


class ChainMDP:
    """Three deterministic states with one-hot observations.

    Action 1 advances one state, action 0 returns to the first state. Acting
    in a state pays that state's reward; acting in the last state ends the
    episode. Episodes start in a uniformly random state so every
    state-action pair keeps being visited.
    """

    n_actions = 2

    def __init__(self, rewards=(0.0, 0.0, 1.0), horizon=50):
        self.rewards = tuple(rewards)
        self.n_states = len(self.rewards)
        self.obs_size = self.n_states
        self.horizon = horizon
        self.rng = np.random.default_rng(0)
        self.s = 0
        self.t = 0

    def _obs(self):
        o = np.zeros(self.n_states)
        o[self.s] = 1.0
        return o

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.s = int(self.rng.integers(self.n_states))
        self.t = 0
        return self._obs()

    def transition(self, s, a):
        """``(reward, next_state, terminal)`` of the deterministic dynamics."""
        reward = self.rewards[s]
        if s == self.n_states - 1:
            return reward, s, True
        return reward, (s + 1 if a == 1 else 0), False

    def step(self, action):
        reward, self.s, terminal = self.transition(self.s, int(action))
        self.t += 1
        return StepResult(self._obs(), reward, (not terminal) and self.t >= self.horizon,
                          terminated=terminal)


def value_iteration(mdp: ChainMDP, gamma: float, tol: float = 1e-14) -> np.ndarray:
    """Optimal Q table by repeated Bellman backups."""
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        new = np.empty_like(q)
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                r, nxt, terminal = mdp.transition(s, a)
                new[s, a] = r if terminal else r + gamma * q[nxt].max()
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
