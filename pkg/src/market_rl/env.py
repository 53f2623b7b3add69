"""Episodic MDP around the market model, plus parameter randomization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

from . import market
from .market import ContractError, MarketParams, MarketState, ProfitBreakdown

TIMESTEP_CYCLE = 100
DOWN, EQUAL, UP = 0, 1, 2


class ConfigError(ValueError):
    pass


class LifecycleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    params: MarketParams = field(default_factory=MarketParams)
    horizon: int = 1000
    seed: int = 0
    observation_scaling: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "horizon": self.horizon,
                "seed": self.seed, "observation_scaling": self.observation_scaling}

    @classmethod
    def from_dict(cls, data: Mapping) -> "EnvConfig":
        unknown = set(data) - {"params", "horizon", "seed", "observation_scaling"}
        if unknown:
            raise ConfigError(f"unknown env keys: {sorted(unknown)}")
        data = dict(data)
        try:
            data["params"] = MarketParams.from_dict(data.get("params", {}))
        except (ContractError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**data)


@dataclass(frozen=True)
class Observation:
    total_supply: float
    total_demand: float
    progress: int
    timestep_mod: int
    competitor_q_prev: tuple
    price: float

    def to_vector(self) -> np.ndarray:
        head = [self.total_supply, self.total_demand, self.progress, self.timestep_mod]
        return np.array(head + list(self.competitor_q_prev) + [self.price], dtype=np.float64)


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    truncated: bool
    breakdown: ProfitBreakdown | None = None
    info: dict = field(default_factory=dict)
    terminated: bool = False


def observation_size(params: MarketParams) -> int:
    return 5 + params.n_competitors


def observation_of(state: MarketState) -> Observation:
    return Observation(
        total_supply=float(state.last_total_supply),
        total_demand=float(state.last_total_demand),
        progress=int(state.progress),
        timestep_mod=int(state.t % TIMESTEP_CYCLE),
        competitor_q_prev=tuple(float(q) for q in state.competitor_q_prev),
        price=float(state.price),
    )


def observation_scale(params: MarketParams) -> np.ndarray:
    """Static per-field divisors applied when observation scaling is on.

    Supply is divided by the largest possible market output and demand by the
    seasonal peak, so both stay in [0, 1] (demand noise can overshoot slightly).
    """
    max_supply = float(params.q_max * (params.n_competitors + 1))
    peak_demand = params.base_demand * (1.0 + params.demand_amplitude)
    return np.array([max_supply, peak_demand, 2.0, float(TIMESTEP_CYCLE)]
                    + [float(params.q_max)] * params.n_competitors + [params.p_max])


def encode_observation(state: MarketState, params: MarketParams, config: EnvConfig) -> np.ndarray:
    vec = observation_of(state).to_vector()
    if config.observation_scaling:
        vec = vec / observation_scale(params)
    return vec


def progress_code(new_total: float, old_total: float) -> int:
    if new_total > old_total:
        return UP
    if new_total < old_total:
        return DOWN
    return EQUAL


class MarketEnv:
    """Seeded reset/step interface. Episodes only truncate, never terminate.

    When ``randomization`` is given, fresh market parameters are sampled from
    it at every reset.
    """

    def __init__(self, config: EnvConfig | None = None, randomization: "RandomizationSpec | None" = None):
        self.config = config or EnvConfig()
        self.randomization = randomization
        self.params = self.config.params
        self.state: MarketState | None = None
        self.rng = np.random.default_rng(self.config.seed)
        self._done = True

    @property
    def n_actions(self) -> int:
        return self.params.n_actions

    @property
    def obs_size(self) -> int:
        return observation_size(self.params)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if self.randomization is not None:
            self.params = sample_params(self.randomization, self.rng)
        p = self.params
        competitors = self.rng.integers(p.q_min, p.q_max + 1, size=p.n_competitors)
        fixed = market.draw_fixed_cost(p, self.rng)
        supply = float(competitors.sum() + p.q_min)
        self.state = MarketState(
            price=p.p_init,
            competitor_q=competitors,
            t=0,
            fixed_cost_base=fixed,
            last_agent_q=p.q_min,
            last_total_supply=supply,
            last_total_demand=market.demand_at(p.p_init, 0, p),
        )
        self._done = False
        return encode_observation(self.state, p, self.config)

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise LifecycleError("step() called before reset()")
        if self._done:
            raise LifecycleError("episode already truncated; call reset()")
        p = self.params
        q = int(action)
        if q != action or not p.q_min <= q <= p.q_max:
            raise ContractError(f"action {action!r} outside [{p.q_min}, {p.q_max}]")
        s = self.state
        rng = self.rng

        walk = rng.integers(-1, 2, size=p.n_competitors)
        z_demand, z_prod, z_fixed, z_brand, z_price = rng.standard_normal(5)

        previous = s.competitor_q.copy()
        competitors = market.competitor_update(s, q, rng, p, walk=walk)
        supply = float(q + competitors.sum())
        demand = market.demand_at(s.price, s.t, p, z_demand)
        breakdown = market.profit(q, s, demand, p, market.ProfitNoise(z_prod, z_fixed, z_brand))
        new_price = market.price_update(s.price, supply, demand, p, z_price)

        s.progress = progress_code(supply, s.last_total_supply)
        s.competitor_q_prev = previous
        s.competitor_q = competitors
        s.last_agent_q = q
        s.last_total_supply = supply
        s.last_total_demand = demand
        s.price = new_price
        s.t += 1
        self._done = s.t >= self.config.horizon

        info = {"t": s.t - 1, "action": q, "supply": supply, "demand": demand, "price": new_price}
        return StepResult(encode_observation(s, p, self.config), breakdown.profit, self._done, breakdown, info)


TRACE_COLUMNS = ("t", "action", "supply", "demand", "price", "reward") + ProfitBreakdown.COMPONENTS


def trace_row(result: StepResult) -> dict:
    row = {k: result.info[k] for k in ("t", "action", "supply", "demand", "price")}
    row["reward"] = result.reward
    for name in ProfitBreakdown.COMPONENTS:
        row[name] = getattr(result.breakdown, name)
    return row


def write_trace(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


# -- domain randomization -------------------------------------------------

_INT_FIELDS = {f.name for f in fields(MarketParams) if f.type in ("int", int)}


@dataclass(frozen=True)
class RandomizationSpec:
    """Per-field distributions over :class:`MarketParams`.

    Each entry maps a field name to a point value or a ``(low, high)``
    interval sampled uniformly (integer fields inclusively). Fields without an
    entry keep the value of ``base``.
    """
    ranges: Mapping[str, object] = field(default_factory=dict)
    base: MarketParams = field(default_factory=MarketParams)

    def __post_init__(self):
        known = {f.name for f in fields(MarketParams)}
        for name, dist in self.ranges.items():
            if name not in known:
                raise ConfigError(f"cannot randomize unknown field {name!r}")
            if name == "cost_coefs":
                raise ConfigError("cost_coefs can only be fixed through base params")
            if isinstance(dist, (list, tuple)):
                if len(dist) != 2 or dist[0] > dist[1]:
                    raise ConfigError(f"bad interval for {name}: {dist!r}")

    @classmethod
    def point(cls, params: MarketParams | None = None) -> "RandomizationSpec":
        return cls({}, params or MarketParams())

    def to_dict(self) -> dict:
        return {"ranges": {k: list(v) if isinstance(v, (list, tuple)) else v
                           for k, v in self.ranges.items()},
                "base": self.base.to_dict()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "RandomizationSpec":
        unknown = set(data) - {"ranges", "base"}
        if unknown:
            raise ConfigError(f"unknown randomization keys: {sorted(unknown)}")
        base = MarketParams.from_dict(data.get("base", {}))
        return cls(dict(data.get("ranges", {})), base)


def sample_params(spec: RandomizationSpec, rng: np.random.Generator) -> MarketParams:
    values = {}
    for name in sorted(spec.ranges):
        dist = spec.ranges[name]
        if isinstance(dist, (list, tuple)):
            lo, hi = dist
            if name in _INT_FIELDS:
                values[name] = int(rng.integers(math.ceil(lo), math.floor(hi) + 1))
            else:
                values[name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        else:
            values[name] = dist
    try:
        return spec.base.with_updates(**values)
    except ContractError as exc:
        raise ConfigError(f"sampled parameters are invalid: {exc}") from exc
