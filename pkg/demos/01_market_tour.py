"""A walk through the market simulator.

Run with ``python3 demos/01_market_tour.py``. Nothing here trains a network;
it shows what a producer faces before any learning happens.
"""
import numpy as np

from market_rl import EnvConfig, MarketEnv, MarketParams
from market_rl import market

params = MarketParams()

# %% The cost curve is cubic: cheap in the middle, expensive at the extremes.
for q in (0, 3, 7, 10, 14):
    print(f"q={q:2d}  base cost {market.cubic_cost(q, params):6.2f}")

# %% Demand falls with price and swings with the season (period 200 steps).
for t in (0, 50, 100, 150):
    print(f"t={t:3d}  demand at p=15: {market.demand_at(15.0, t, params):6.2f}")

# %% Producing beyond demand is punished exponentially through storage costs.
for excess in (0, 1, 3, 6, 12):
    print(f"excess {excess:2d} units -> storage penalty {market.storage_penalty(excess, 0.0, params):8.1f}")

# %% One episode with a constant quantity. The reward is the step profit.
env = MarketEnv(EnvConfig(horizon=1000))
obs = env.reset(seed=0)
print("first observation (scaled):", np.round(obs, 3))
profits = [env.step(7).reward for _ in range(1000)]
print(f"fixed q=7 over 1000 steps: {sum(profits):.0f}")

# %% Every constant quantity on the same market seed. Over-producing is ruinous.
totals = {}
for k in range(params.q_min, params.q_max + 1):
    env.reset(seed=0)
    totals[k] = sum(env.step(k).reward for _ in range(1000))
best = max(totals, key=totals.get)
print("fixed-quantity profits:", {k: round(v) for k, v in totals.items()})
print(f"best constant quantity is {best}; mean over all constants {np.mean(list(totals.values())):.0f}")

# %% A producer that reacts to the season can beat every constant policy:
# produce as much as demand allows, at most q_max.
env.reset(seed=0)
total = 0.0
for _ in range(1000):
    s = env.state
    share = market.demand_at(s.price, s.t, params) - s.competitor_q.sum()
    total += env.step(int(np.clip(np.floor(share), 0, params.q_max))).reward
print(f"demand-following heuristic: {total:.0f}")
