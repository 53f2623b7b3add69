"""Production-market simulator with from-scratch deep RL agents and the
statistics used to compare them against fixed and random producers."""
from .env import EnvConfig, MarketEnv, RandomizationSpec, sample_params
from .market import MarketParams, MarketState, ProfitBreakdown

__all__ = ["EnvConfig", "MarketEnv", "MarketParams", "MarketState", "ProfitBreakdown",
           "RandomizationSpec", "sample_params"]
__version__ = "0.1.0"
