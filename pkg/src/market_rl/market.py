"""Single-good production market.

Every function here is pure: stochastic terms enter as pre-drawn standard
normal variates (or an explicit ``numpy.random.Generator``), so setting the
variates to zero gives the closed-form noise-free dynamics.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np


class ContractError(ValueError):
    """An argument violated an operation's precondition."""


@dataclass(frozen=True)
class MarketParams:
    q_min: int = 0
    q_max: int = 14
    n_competitors: int = 3
    p_init: float = 15.0
    fixed_cost_min: float = 1.0
    fixed_cost_max: float = 10.0
    cost_coefs: tuple[float, float, float, float] = (0.0, 4.0, -0.6, 0.03)
    elasticity: float = 1.02
    base_demand: float = 43.4
    production_noise: float = 0.05
    storage_factor: float = 2.0
    max_brand_effect: float = 0.3
    max_subsidy: float = 10.0
    # not part of the published parameter table; tunable reconstruction constants
    demand_period: int = 200
    supply_period: int = 200
    demand_amplitude: float = 1.0
    supply_amplitude: float = 0.1
    price_sensitivity: float = 0.1
    quad_demand_coef: float = 0.05
    p_min: float = 1.0
    p_max: float = 60.0
    storage_exponent_cap: int = 12

    def __post_init__(self):
        object.__setattr__(self, "cost_coefs", tuple(float(c) for c in self.cost_coefs))
        self.validate()

    def validate(self) -> None:
        problems = []
        if len(self.cost_coefs) != 4:
            problems.append("cost_coefs must have 4 entries")
        if not self.q_min <= self.q_max:
            problems.append("q_min > q_max")
        if self.q_max <= 0:
            problems.append("q_max must be positive")
        if self.n_competitors < 1:
            problems.append("n_competitors < 1")
        if not self.fixed_cost_min <= self.fixed_cost_max:
            problems.append("fixed_cost_min > fixed_cost_max")
        if not self.p_min <= self.p_init <= self.p_max:
            problems.append("p_init outside [p_min, p_max]")
        if self.p_min < 0:
            problems.append("p_min < 0")
        for name in ("production_noise", "demand_amplitude", "supply_amplitude",
                     "demand_period", "supply_period", "base_demand", "elasticity",
                     "quad_demand_coef", "price_sensitivity", "max_subsidy",
                     "storage_exponent_cap"):
            if getattr(self, name) < 0:
                problems.append(f"{name} < 0")
        if self.demand_period == 0 or self.supply_period == 0:
            problems.append("seasonal periods must be positive")
        if not self.storage_factor > 1:
            problems.append("storage_factor must exceed 1")
        if not 0 <= self.max_brand_effect < 1:
            problems.append("max_brand_effect outside [0, 1)")
        if problems:
            raise ContractError("invalid MarketParams: " + "; ".join(problems))

    @property
    def n_actions(self) -> int:
        return self.q_max - self.q_min + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cost_coefs"] = list(self.cost_coefs)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "MarketParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown MarketParams keys: {sorted(unknown)}")
        return cls(**data)

    def with_updates(self, **changes) -> "MarketParams":
        return replace(self, **changes)


@dataclass
class MarketState:
    price: float
    competitor_q: np.ndarray
    t: int
    fixed_cost_base: float
    last_agent_q: int
    last_total_supply: float
    last_total_demand: float
    progress: int = 1
    competitor_q_prev: np.ndarray = field(default=None)

    def __post_init__(self):
        self.competitor_q = np.asarray(self.competitor_q, dtype=np.int64)
        if self.competitor_q_prev is None:
            self.competitor_q_prev = self.competitor_q.copy()

    def copy(self) -> "MarketState":
        return replace(self, competitor_q=self.competitor_q.copy(),
                       competitor_q_prev=self.competitor_q_prev.copy())


class ProfitNoise(NamedTuple):
    """Standard-normal variates consumed by :func:`profit`."""
    production: float = 0.0
    fixed_cost: float = 0.0
    brand: float = 0.0


@dataclass(frozen=True)
class ProfitBreakdown:
    revenue: float
    brand_bonus: float
    subsidy: float
    fixed_cost_paid: float
    production_cost: float
    storage_penalty: float
    profit: float

    COMPONENTS = ("revenue", "brand_bonus", "subsidy", "fixed_cost_paid",
                  "production_cost", "storage_penalty")

    def as_dict(self) -> dict:
        return asdict(self)


def _check_q(q, params: MarketParams) -> None:
    if not params.q_min <= q <= params.q_max:
        raise ContractError(f"quantity {q} outside [{params.q_min}, {params.q_max}]")


def cubic_cost(q: int, params: MarketParams) -> float:
    _check_q(q, params)
    c0, c1, c2, c3 = params.cost_coefs
    return max(0.0, c0 + c1 * q + c2 * q * q + c3 * q * q * q)


def seasonal_factor(t: int, period: float, amplitude: float) -> float:
    if period <= 0:
        raise ContractError("seasonal period must be positive")
    return 1.0 + amplitude * math.sin(2.0 * math.pi * t / period)


def demand_at(price: float, t: int, params: MarketParams, noise: float = 0.0) -> float:
    if price < 0:
        raise ContractError("price must be non-negative")
    base = params.base_demand * seasonal_factor(t, params.demand_period, params.demand_amplitude)
    base += params.production_noise * params.base_demand * noise
    over = max(0.0, price - params.p_init)
    return max(0.0, base - params.elasticity * price - params.quad_demand_coef * over * over)


def competitor_update(state: MarketState, agent_q: int, rng: np.random.Generator,
                      params: MarketParams, walk: np.ndarray | None = None) -> np.ndarray:
    """Next competitor quantities: uniform {-1, 0, 1} walk plus a push against
    the agent's production change. ``walk`` overrides the random draw."""
    _check_q(agent_q, params)
    if walk is None:
        walk = rng.integers(-1, 2, size=params.n_competitors)
    drift = int(np.sign(agent_q - state.last_agent_q))
    new_q = np.asarray(state.competitor_q, dtype=np.int64) + np.asarray(walk, dtype=np.int64) - drift
    return np.clip(new_q, params.q_min, params.q_max)


def production_cost(q: int, t: int, params: MarketParams, noise: float = 0.0) -> float:
    base = cubic_cost(q, params)
    season = seasonal_factor(t, params.supply_period, params.supply_amplitude)
    return max(0.0, base * season * (1.0 + params.production_noise * noise))


def storage_penalty(q: float, demand: float, params: MarketParams) -> float:
    if q < 0 or demand < 0:
        raise ContractError("storage penalty needs q >= 0 and demand >= 0")
    if q <= demand:
        return 0.0
    excess = min(q - demand, params.storage_exponent_cap)
    return params.storage_factor ** excess - 1.0


def price_update(price: float, supply: float, demand: float, params: MarketParams,
                 noise: float = 0.0) -> float:
    if supply < 0 or demand < 0:
        raise ContractError("supply and demand must be non-negative")
    imbalance = (demand - supply) / max(demand, supply, 1.0)
    new_price = price * (1.0 + params.price_sensitivity * imbalance + params.production_noise * noise)
    return min(max(new_price, params.p_min), params.p_max)


def brand_bonus(q: int, price: float, params: MarketParams, noise: float = 0.0) -> float:
    _check_q(q, params)
    share = q / params.q_max
    return max(0.0, price * q * params.max_brand_effect * share * (1.0 + params.production_noise * noise))


def subsidy(q: int, params: MarketParams) -> float:
    _check_q(q, params)
    return params.max_subsidy * q / params.q_max


def profit(q: int, state: MarketState, demand: float, params: MarketParams,
           noises: ProfitNoise = ProfitNoise()) -> ProfitBreakdown:
    """Per-step profit of producing ``q`` units at the state's current price."""
    noises = ProfitNoise(*noises)
    revenue = state.price * q
    bonus = brand_bonus(q, state.price, params, noises.brand)
    aid = subsidy(q, params)
    fixed = max(0.0, state.fixed_cost_base * (1.0 + params.production_noise * noises.fixed_cost))
    cost = production_cost(q, state.t, params, noises.production)
    storage = storage_penalty(q, demand, params)
    total = revenue + bonus + aid - fixed - cost - storage
    return ProfitBreakdown(revenue, bonus, aid, fixed, cost, storage, total)


def draw_fixed_cost(params: MarketParams, rng: np.random.Generator) -> float:
    """Per-episode fixed cost: normal centred in the range, 3 sigma to each end, clipped."""
    lo, hi = params.fixed_cost_min, params.fixed_cost_max
    mean, std = 0.5 * (lo + hi), (hi - lo) / 6.0
    return float(np.clip(rng.normal(mean, std), lo, hi))
