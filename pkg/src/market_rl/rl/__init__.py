"""PPO, A2C and DQN on top of :mod:`market_rl.nn`, plus baseline policies."""
