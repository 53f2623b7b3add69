"""A miniature version of the full experiment, in about half a minute.

Trains two PPO agents for 60k steps each, evaluates them next to every
fixed-quantity producer and five random producers, and runs the one-sided
Welch tests. The ``market-rl replicate`` command does the same at full size.
"""
import json
import sys
import tempfile
from pathlib import Path

from market_rl.harness import experiment as ex
from market_rl.harness.config import ExperimentConfig

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="market_rl_demo_"))

cfg = ExperimentConfig.from_dict({
    "train": {"total_steps": 60_000, "n_envs": 4},
    "eval": {"horizon": 1000, "episodes": 3},
    "replicate": {"ppo_seeds": [0, 1], "dqn_seeds": [], "a2c_seeds": [], "random_agents": 5},
})
manifest = ex.replicate(cfg, out, master_seed=7)
print(f"{len(manifest['files'])} files written under {out}")

# %% Group means, then the tests. alpha is 0.001 as in the full protocol.
comparison = json.loads((out / "comparison" / "comparison.json").read_text())
for name, group in comparison["groups"].items():
    print(f"{name:7s} n={group['n']:2d} mean profit {group['mean']:10.0f}")
for name, test in comparison["tests"].items():
    print(f"{name:15s} t={test['t_statistic']:7.2f} dof={test['degrees_of_freedom']:6.2f} "
          f"p={test['p_value']:.2g} reject={test['reject_h0']}")

# %% Training diagnostics live next to each checkpoint.
rows = (out / "train" / "ppo_s0" / "metrics.csv").read_text().splitlines()
print(rows[0])
print(rows[-1])
