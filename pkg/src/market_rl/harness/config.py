"""Experiment configuration: one JSON document with env/algo/train/eval
sections (plus an optional replicate roster). Unknown keys are errors."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping

from ..env import ConfigError, EnvConfig, RandomizationSpec
from ..rl import a2c, dqn, ppo

ALGORITHMS = {
    "ppo": (ppo.PpoConfig, ppo.train),
    "a2c": (a2c.A2cConfig, a2c.train),
    "dqn": (dqn.DqnConfig, dqn.train),
}

# profits are O(100) per step; scaled rewards keep value targets near unit size
MARKET_REWARD_SCALE = 0.01

DESK_STEPS = 200_000
FULL_STEPS = 1_500_000


def algo_config(name: str, overrides: Mapping | None = None):
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}")
    cls = ALGORITHMS[name][0]
    values = {"reward_scale": MARKET_REWARD_SCALE}
    values.update(overrides or {})
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad {name} config: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_keys(section: str, data: Mapping, allowed) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


@dataclass(frozen=True)
class TrainSection:
    total_steps: int = DESK_STEPS
    n_envs: int = 4
    seed: int = 0
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.total_steps < 1 or self.n_envs < 1 or self.checkpoint_every < 1:
            raise ConfigError("total_steps, n_envs and checkpoint_every must be >= 1")


@dataclass(frozen=True)
class EvalSection:
    horizon: int = 1000
    episodes: int = 5
    seed: int = 12345

    def __post_init__(self):
        if self.horizon < 0 or self.episodes < 1:
            raise ConfigError("eval horizon must be >= 0 and episodes >= 1")


@dataclass(frozen=True)
class ReplicateSection:
    ppo_seeds: tuple = tuple(range(10))
    dqn_seeds: tuple = (0,)
    a2c_seeds: tuple = (0,)
    fixed_units: tuple | None = None  # None: every admissible quantity
    random_agents: int = 5
    jobs: int = 1

    def __post_init__(self):
        for name in ("ppo_seeds", "dqn_seeds", "a2c_seeds"):
            seeds = tuple(int(s) for s in getattr(self, name))
            if len(set(seeds)) != len(seeds):
                raise ConfigError(f"{name} must be distinct")
            object.__setattr__(self, name, seeds)
        if self.fixed_units is not None:
            object.__setattr__(self, "fixed_units", tuple(int(k) for k in self.fixed_units))
        if self.random_agents < 0 or self.jobs < 1:
            raise ConfigError("random_agents must be >= 0 and jobs >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    randomization: RandomizationSpec | None = None
    algorithm: str = "ppo"
    algo: object = None
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    replicate: ReplicateSection = field(default_factory=ReplicateSection)
    output_dir: str = "runs"

    def __post_init__(self):
        if self.algo is None:
            object.__setattr__(self, "algo", algo_config(self.algorithm))
        elif not isinstance(self.algo, ALGORITHMS.get(self.algorithm, (type(None),))[0]):
            raise ConfigError(f"algo config does not match algorithm {self.algorithm!r}")

    def with_algorithm(self, name: str, overrides: Mapping | None = None) -> "ExperimentConfig":
        return replace(self, algorithm=name, algo=algo_config(name, overrides))

    def to_dict(self) -> dict:
        env = self.env.to_dict()
        if self.randomization is not None:
            env["randomization"] = self.randomization.to_dict()
        return {
            "env": env,
            "algo": {"name": self.algorithm, "config": self.algo.to_dict()},
            "train": vars(self.train).copy(),
            "eval": vars(self.eval).copy(),
            "replicate": {k: (list(v) if isinstance(v, tuple) else v)
                          for k, v in vars(self.replicate).items()},
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        _check_keys("config", data, {"env", "algo", "train", "eval", "replicate", "output_dir"})
        env_data = dict(data.get("env", {}))
        _check_keys("env", env_data, {"params", "horizon", "seed", "observation_scaling", "randomization"})
        rand = env_data.pop("randomization", None)
        env = EnvConfig.from_dict(env_data)
        randomization = None
        if rand is not None:
            randomization = RandomizationSpec.from_dict(dict(rand, base=rand.get("base", env.params.to_dict())))

        algo_data = data.get("algo", {})
        _check_keys("algo", algo_data, {"name", "config"})
        name = algo_data.get("name", "ppo")
        algo = algo_config(name, algo_data.get("config"))

        sections = {}
        for key, klass in (("train", TrainSection), ("eval", EvalSection), ("replicate", ReplicateSection)):
            raw = data.get(key, {})
            _check_keys(key, raw, klass.__dataclass_fields__)
            sections[key] = klass(**raw)
        return cls(env=env, randomization=randomization, algorithm=name, algo=algo,
                   output_dir=data.get("output_dir", "runs"), **sections)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)


def preset(name: str) -> ExperimentConfig:
    """``desk`` (minutes on a laptop) or ``full`` (1.5M training steps per agent)."""
    if name == "desk":
        return ExperimentConfig()
    if name == "full":
        return ExperimentConfig(train=TrainSection(total_steps=FULL_STEPS))
    raise ConfigError(f"unknown preset {name!r}")
