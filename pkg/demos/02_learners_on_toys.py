"""The three learners on problems with known answers.

A two-armed bandit (arm 0 always pays 1, arm 1 pays 0) for the policy-gradient
methods, and a three-state chain whose optimal Q table comes from value
iteration for DQN. Takes about 20 seconds.
"""
import numpy as np

from market_rl.rl import a2c, dqn, ppo
from market_rl.rl.toy_envs import ChainMDP, TwoArmedBandit, value_iteration

# %% PPO: 50 updates of 256 one-step episodes each.
res = ppo.train(TwoArmedBandit, 50 * 256, ppo.PpoConfig(rollout_length=256), seed=0)
print("PPO   P(arm 0) =", round(float(res.policy.action_probs(np.ones(1))[0]), 4))
loss = res.metrics.column("value_loss")
print(f"      value loss, first and last update: {loss[0]:.4f} {loss[-1]:.2e}")

# %% A2C: 2000 five-step updates.
res = a2c.train(TwoArmedBandit, 2000 * 5, a2c.A2cConfig(), seed=0)
print("A2C   P(arm 0) =", round(float(res.policy.action_probs(np.ones(1))[0]), 4))

# %% DQN on the chain. Uniform exploration keeps every (s, a) pair in the replay buffer.
gamma = 0.9
cfg = dqn.DqnConfig(gamma=gamma, epsilon_start=1.0, epsilon_end=1.0, learning_rate=3e-4,
                    learning_starts=100, train_freq=1, target_sync_interval=500, buffer_size=10_000)
res = dqn.train(ChainMDP, 20_100, cfg, seed=0)
learned = res.policy.q_values(np.eye(3))
exact = value_iteration(ChainMDP(), gamma)
print("DQN   learned Q:\n", np.round(learned, 6))
print("      value iteration:\n", exact)
print("      max error", np.abs(learned - exact).max())
