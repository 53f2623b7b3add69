"""Policies: learned (actor-critic, Q-network) and scripted baselines."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..nn import CHECKPOINT_FORMAT_VERSION, AdamState, Mlp, categorical_sample, dumps, softmax

SAMPLE, GREEDY = "sample", "greedy"
HIDDEN = (64, 64)


class ActorCriticPolicy:
    """Separate policy and value MLPs; used by PPO and A2C."""

    kind = "actor_critic"

    def __init__(self, obs_size, n_actions, rng, hidden=HIDDEN, action_offset=0):
        self.policy_net = Mlp([obs_size, *hidden, n_actions], rng, output_gain=0.01)
        self.value_net = Mlp([obs_size, *hidden, 1], rng, output_gain=1.0)
        self.action_offset = action_offset
        self.n_actions = n_actions

    @property
    def nets(self) -> dict:
        return {"policy": self.policy_net, "value": self.value_net}

    @property
    def params(self) -> list:
        return self.policy_net.params + self.value_net.params

    def logits(self, obs):
        return self.policy_net.forward(obs)

    def value(self, obs):
        return self.value_net.forward(obs)[..., 0]

    def action_index(self, obs, rng, mode):
        logits = self.logits(obs)
        if mode == GREEDY:
            return np.argmax(logits, axis=-1)
        return categorical_sample(logits, rng)

    def action_probs(self, obs):
        return softmax(self.logits(obs))


class QPolicy:
    """Q-network acting epsilon-greedily (``epsilon`` is read in sample mode)."""

    kind = "q_network"

    def __init__(self, obs_size, n_actions, rng, hidden=HIDDEN, action_offset=0):
        self.q_net = Mlp([obs_size, *hidden, n_actions], rng, output_gain=1.0)
        self.action_offset = action_offset
        self.n_actions = n_actions
        self.epsilon = 0.0

    @property
    def nets(self) -> dict:
        return {"q": self.q_net}

    @property
    def params(self) -> list:
        return self.q_net.params

    def q_values(self, obs):
        return self.q_net.forward(obs)

    def action_index(self, obs, rng, mode):
        greedy = np.argmax(self.q_values(obs), axis=-1)
        if mode == GREEDY or self.epsilon <= 0:
            return greedy
        if np.ndim(greedy) == 0:
            if rng.random() < self.epsilon:
                return int(rng.integers(self.n_actions))
            return greedy
        explore = rng.random(greedy.shape[0]) < self.epsilon
        return np.where(explore, rng.integers(self.n_actions, size=greedy.shape[0]), greedy)


@dataclass(frozen=True)
class FixedPolicy:
    units: int
    kind = "fixed"

    def act(self, obs, rng=None, mode=GREEDY) -> int:
        return self.units


@dataclass(frozen=True)
class RandomPolicy:
    low: int
    high: int
    kind = "random"

    def act(self, obs, rng, mode=SAMPLE) -> int:
        return int(rng.integers(self.low, self.high + 1))


def act(policy, observation, rng=None, mode=SAMPLE):
    """Action in environment units (network index plus the policy's offset)."""
    if mode not in (SAMPLE, GREEDY):
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(policy, (FixedPolicy, RandomPolicy)):
        return policy.act(observation, rng, mode)
    idx = policy.action_index(np.asarray(observation, dtype=np.float64), rng, mode)
    if np.ndim(idx) == 0:
        return int(idx) + policy.action_offset
    return np.asarray(idx) + policy.action_offset


# -- checkpoints ------------------------------------------------------------

def checkpoint_dict(policy, algorithm: str, config: dict | None = None,
                    optimizer: AdamState | None = None, extra: dict | None = None) -> dict:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "algorithm": algorithm,
        "policy_kind": policy.kind,
        "action_offset": policy.action_offset,
        "n_actions": policy.n_actions,
        "networks": {name: net.to_dict() for name, net in policy.nets.items()},
        "config": config or {},
    }
    if optimizer is not None:
        doc["optimizer"] = optimizer.to_dict()
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(path, policy, algorithm, config=None, optimizer=None, extra=None) -> None:
    text = dumps(checkpoint_dict(policy, algorithm, config, optimizer, extra))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def policy_from_checkpoint(doc: dict):
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    nets = {name: Mlp.from_dict(d) for name, d in doc["networks"].items()}
    kind = doc["policy_kind"]
    if kind == ActorCriticPolicy.kind:
        policy = ActorCriticPolicy.__new__(ActorCriticPolicy)
        policy.policy_net, policy.value_net = nets["policy"], nets["value"]
    elif kind == QPolicy.kind:
        policy = QPolicy.__new__(QPolicy)
        policy.q_net = nets["q"]
        policy.epsilon = 0.0
    else:
        raise ValueError(f"unknown policy kind {kind!r}")
    policy.action_offset = int(doc["action_offset"])
    policy.n_actions = int(doc["n_actions"])
    return policy


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return policy_from_checkpoint(doc), doc
