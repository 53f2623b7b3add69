import math

import numpy as np
import pytest

from market_rl import EnvConfig, MarketEnv
from market_rl.nn import AdamState, Mlp, log_softmax
from market_rl.rl import a2c, dqn, ppo
from market_rl.rl.common import MetricsLog, ReplayBuffer, RolloutBuffer, VecEnv, read_metrics
from market_rl.rl.common import compute_returns_and_gae
from market_rl.rl.policies import (GREEDY, SAMPLE, ActorCriticPolicy, FixedPolicy, QPolicy, RandomPolicy, act,
                                   load_checkpoint, save_checkpoint)
from market_rl.rl.toy_envs import ChainMDP, TwoArmedBandit, value_iteration


def filled_buffer(rewards, values, terminated=None, truncated=None, boot=None):
    T = len(rewards)
    buf = RolloutBuffer(T, 1, 1)
    for t in range(T):
        buf.add(np.zeros(1), 0, rewards[t], values[t], 0.0,
                False if terminated is None else terminated[t],
                False if truncated is None else truncated[t],
                0.0 if boot is None else boot[t])
    return buf


# -- GAE --------------------------------------------------------------------

def test_gae_monte_carlo_case():
    r = [1.0, -2.0, 0.5, 3.0]
    adv, ret = compute_returns_and_gae(filled_buffer(r, [0.0] * 4), 0.0, 1.0, 1.0)
    np.testing.assert_allclose(adv[:, 0], [2.5, 1.5, 3.5, 3.0])
    np.testing.assert_allclose(ret, adv)


def test_gae_single_step():
    adv, _ = compute_returns_and_gae(filled_buffer([1.0], [0.0]), 2.0, 0.5, 1.0)
    assert adv[0, 0] == 2.0


def test_gae_all_zero():
    adv, _ = compute_returns_and_gae(filled_buffer([0.0] * 5, [0.0] * 5), 0.0, 0.99, 0.95)
    assert np.all(adv == 0)


def test_gae_terminal_and_truncation_boundaries():
    # terminal at t=1 cuts the bootstrap; truncation at t=3 bootstraps from V(final obs)=10
    r = [1.0, 1.0, 1.0, 1.0]
    buf = filled_buffer(r, [0.0] * 4, terminated=[False, True, False, False],
                        truncated=[False, False, False, True], boot=[0, 0, 0, 10.0])
    adv, _ = compute_returns_and_gae(buf, last_value=99.0, gamma=0.5, gae_lambda=1.0)
    np.testing.assert_allclose(adv[:, 0], [1.5, 1.0, 1 + 0.5 * 6.0, 6.0])


def test_gae_needs_full_buffer():
    buf = RolloutBuffer(3, 1, 1)
    with pytest.raises(ValueError):
        compute_returns_and_gae(buf, 0.0, 0.9, 0.9)


# -- PPO loss ---------------------------------------------------------------

def tiny_policy(seed=0, obs_size=3, n_actions=4):
    return ActorCriticPolicy(obs_size, n_actions, np.random.default_rng(seed), hidden=(5,))


def ratio_batch(policy, obs, action, ratio, advantage):
    logp = log_softmax(policy.logits(obs[None]))[0, action]
    return ppo.PpoBatch(obs[None], np.array([action]), np.array([logp - math.log(ratio)]),
                        np.array([advantage]), np.zeros(1))


PURE_POLICY = ppo.PpoConfig(value_coef=0.0, entropy_coef=0.0)


@pytest.mark.parametrize("ratio, advantage, expected", [(1.3, 2.0, -2.4), (0.5, -1.0, 0.8), (1.0, 1.7, -1.7)])
def test_ppo_loss_hand_examples(ratio, advantage, expected):
    policy = tiny_policy()
    batch = ratio_batch(policy, np.array([0.2, -0.4, 1.0]), 2, ratio, advantage)
    loss, diag = ppo.ppo_loss(batch, policy, PURE_POLICY)
    assert abs(loss - expected) <= 1e-12


def test_ppo_same_policy_ratio_one():
    policy = tiny_policy()
    rng = np.random.default_rng(0)
    obs = rng.standard_normal((6, 3))
    actions = rng.integers(0, 4, 6)
    logp = log_softmax(policy.logits(obs))[np.arange(6), actions]
    adv = rng.standard_normal(6)
    batch = ppo.PpoBatch(obs, actions, logp, adv, np.zeros(6))
    cfg = ppo.PpoConfig(value_coef=0.0, normalize_advantage=False)
    loss, diag = ppo.ppo_loss(batch, policy, cfg)
    assert loss == pytest.approx(-adv.mean(), abs=1e-15)
    assert diag["approx_kl"] == 0.0 and diag["clip_fraction"] == 0.0


def test_clipped_surrogate():
    np.testing.assert_allclose(ppo.clipped_surrogate([1.3, 0.5, 0.9], [2.0, -1.0, 1.0], 0.2), [2.4, -0.8, 0.9])


def test_ppo_gradient_matches_finite_differences():
    policy = tiny_policy(seed=3)
    rng = np.random.default_rng(4)
    obs = rng.standard_normal((8, 3))
    actions = rng.integers(0, 4, 8)
    logp = log_softmax(policy.logits(obs))[np.arange(8), actions] + rng.normal(0, 0.3, 8)
    batch = ppo.PpoBatch(obs, actions, logp, rng.standard_normal(8), rng.standard_normal(8))
    cfg = ppo.PpoConfig(entropy_coef=0.01)
    _, _, grads = ppo._loss_and_grads(batch, policy, cfg)
    for p, g in zip(policy.params, grads):
        for idx in list(np.ndindex(p.shape))[:6]:
            keep = p[idx]
            p[idx] = keep + 1e-6
            up = ppo.ppo_loss(batch, policy, cfg)[0]
            p[idx] = keep - 1e-6
            down = ppo.ppo_loss(batch, policy, cfg)[0]
            p[idx] = keep
            assert g[idx] == pytest.approx((up - down) / 2e-6, abs=1e-7)


def market_buffer(seed=0):
    env = MarketEnv(EnvConfig(horizon=40))
    vec = VecEnv([env], [seed])
    policy = ActorCriticPolicy(vec.obs_size, vec.n_actions, np.random.default_rng(seed))
    buf = RolloutBuffer(64, 1, vec.obs_size)
    ppo.collect_rollout(vec, policy, buf, np.random.default_rng(1), reward_scale=0.01)
    compute_returns_and_gae(buf, policy.value(vec.obs), 0.99, 0.95)
    return buf, policy


def test_ppo_update_zero_lr():
    buf, policy = market_buffer()
    before = [p.copy() for p in policy.params]
    opt = AdamState.for_params(policy.params, learning_rate=0.0)
    diag = ppo.ppo_update(buf, policy, opt, ppo.PpoConfig(learning_rate=0.0), np.random.default_rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(before, policy.params))
    assert diag["approx_kl"] == 0.0


def test_ppo_update_deterministic():
    results = []
    for _ in range(2):
        buf, policy = market_buffer(seed=5)
        opt = AdamState.for_params(policy.params, learning_rate=1e-3)
        ppo.ppo_update(buf, policy, opt, ppo.PpoConfig(epochs=2), np.random.default_rng(7))
        results.append([p.copy() for p in policy.params])
    assert all(np.array_equal(a, b) for a, b in zip(*results))


def test_ppo_train_update_count(tmp_path):
    cfg = ppo.PpoConfig(rollout_length=64, minibatch=32, epochs=1)
    res = ppo.train(TwoArmedBandit, 130, cfg, seed=0, metrics_path=tmp_path / "m.csv")
    rows = read_metrics(tmp_path / "m.csv")
    assert len(rows) == 3 and rows[-1]["env_steps"] == 192 and res.env_steps == 192


def test_bad_ppo_config():
    with pytest.raises(ValueError):
        ppo.PpoConfig(clip_epsilon=0.0)
    with pytest.raises(ValueError):
        ppo.train(TwoArmedBandit, 10, ppo.PpoConfig(rollout_length=10), n_envs=3)


# -- DQN --------------------------------------------------------------------

def test_dqn_target_examples():
    net = Mlp.from_arrays([np.array([[2.0, 0.0, -1.0]])], [np.zeros(3)])
    assert dqn.dqn_target([3.0], [[1.0]], [True], net, 0.99)[0] == 3.0
    assert dqn.dqn_target([1.0], [[1.0]], [False], net, 0.5)[0] == 2.0
    r = np.array([0.3, -2.0, 5.0])
    assert np.array_equal(dqn.dqn_target(r, np.ones((3, 1)), [False] * 3, net, 0.0), r)


def test_epsilon_schedule():
    cfg = dqn.DqnConfig()
    assert dqn.epsilon_at(0, cfg, 1000) == 1.0
    assert dqn.epsilon_at(50, cfg, 1000) == pytest.approx(0.525)
    assert dqn.epsilon_at(100, cfg, 1000) == 0.05
    assert dqn.epsilon_at(1000, cfg, 1000) == 0.05


def exact_q_net(gamma):
    q_star = value_iteration(ChainMDP(), gamma)
    return Mlp.from_arrays([q_star], [np.zeros(2)]), q_star


def chain_batch():
    mdp = ChainMDP()
    obs, acts, rews, nxt, dones = [], [], [], [], []
    for s in range(3):
        for a in range(2):
            r, s2, term = mdp.transition(s, a)
            obs.append(np.eye(3)[s]), acts.append(a), rews.append(r), nxt.append(np.eye(3)[s2]), dones.append(term)
    return np.array(obs), np.array(acts), np.array(rews), np.array(nxt), np.array(dones)


def test_dqn_loss_zero_at_fixed_point():
    net, _ = exact_q_net(0.9)
    loss, grads = dqn.dqn_loss_and_grads(chain_batch(), net, net.copy(), 0.9)
    assert loss < 1e-10


def test_dqn_update_zero_lr():
    net, _ = exact_q_net(0.9)
    net.weights[0] += 0.3
    before = [p.copy() for p in net.params]
    replay = ReplayBuffer(10, 3)
    for row in zip(*chain_batch()):
        replay.add(*row)
    cfg = dqn.DqnConfig(learning_rate=0.0, batch_size=4)
    loss = dqn.dqn_update(replay, net, net.copy(), AdamState.for_params(net.params, learning_rate=0.0), cfg,
                          np.random.default_rng(0))
    assert loss > 0
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params))


def test_dqn_train_logs_rows(tmp_path):
    cfg = dqn.DqnConfig(learning_starts=10, log_interval=100, batch_size=8, reward_scale=0.01)
    make = lambda: MarketEnv(EnvConfig(horizon=50))  # noqa: E731
    res = dqn.train(make, 300, cfg, seed=0, metrics_path=tmp_path / "m.csv")
    assert [r["env_steps"] for r in read_metrics(tmp_path / "m.csv")] == [100, 200, 300]
    assert res.policy.epsilon == 0.0


# -- A2C --------------------------------------------------------------------

def test_a2c_zero_advantage_zero_actor_grad():
    buf, policy = market_buffer()
    buf.returns = policy.value(buf.flat("observations")).reshape(buf.values.shape)
    diag = a2c.a2c_update(buf, policy, AdamState.for_params(policy.params), a2c.A2cConfig())
    assert all(np.all(g == 0) for g in diag["actor_grads"])


def test_a2c_zero_lr():
    buf, policy = market_buffer()
    before = [p.copy() for p in policy.params]
    a2c.a2c_update(buf, policy, AdamState.for_params(policy.params, learning_rate=0.0),
                   a2c.A2cConfig(learning_rate=0.0))
    assert all(np.array_equal(a, b) for a, b in zip(before, policy.params))


def test_a2c_train_runs(tmp_path):
    res = a2c.train(TwoArmedBandit, 100, a2c.A2cConfig(log_interval=5), seed=1, metrics_path=tmp_path / "m.csv")
    assert len(read_metrics(tmp_path / "m.csv")) == 4 and res.env_steps == 100


# -- policies, buffers, checkpoints -------------------------------------------

def test_fixed_policy():
    p = FixedPolicy(7)
    assert all(act(p, np.random.default_rng(i).standard_normal(8), mode=m) == 7
               for i in range(20) for m in (SAMPLE, GREEDY))


def test_random_policy_uniform():
    rng = np.random.default_rng(0)
    p = RandomPolicy(0, 14)
    draws = np.array([act(p, None, rng) for _ in range(150_000)])
    freq = np.bincount(draws, minlength=15) / draws.size
    assert np.all(np.abs(freq - 1 / 15) <= 0.005)


def test_unknown_mode():
    with pytest.raises(ValueError):
        act(FixedPolicy(1), None, mode="softly")


def test_replay_ring_and_uniformity():
    rb = ReplayBuffer(50, 2)
    for i in range(70):
        rb.add(np.full(2, i), i % 3, float(i), np.full(2, i + 1), i % 7 == 0)
    assert len(rb) == 50
    assert set(rb.rewards.astype(int)) == set(range(20, 70))
    idx = rb.sample_indices(100_000, np.random.default_rng(0))
    counts = np.bincount(idx, minlength=50)
    expected = 100_000 / 50
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 85.4  # 0.999 quantile of chi-square with 49 dof
    with pytest.raises(ValueError):
        ReplayBuffer(5, 1).sample(3, np.random.default_rng(0))


@pytest.mark.parametrize("kind", ["actor_critic", "q_network"])
def test_checkpoint_round_trip(tmp_path, kind):
    rng = np.random.default_rng(0)
    cls = ActorCriticPolicy if kind == "actor_critic" else QPolicy
    policy = cls(8, 15, rng)
    opt = AdamState.for_params(policy.params)
    save_checkpoint(tmp_path / "c.json", policy, "x", {"lr": 1e-4}, opt)
    again, doc = load_checkpoint(tmp_path / "c.json")
    obs = np.random.default_rng(1).uniform(-1, 2, (1000, 8))
    assert np.array_equal(act(policy, obs, mode=GREEDY), act(again, obs, mode=GREEDY))
    assert doc["config"] == {"lr": 1e-4} and "optimizer" in doc


def test_checkpoint_version_checked(tmp_path):
    from market_rl.rl.policies import checkpoint_dict, policy_from_checkpoint
    doc = checkpoint_dict(QPolicy(2, 2, np.random.default_rng(0)), "dqn")
    doc["format_version"] = 99
    with pytest.raises(ValueError):
        policy_from_checkpoint(doc)


def test_vec_env_auto_reset():
    vec = VecEnv([MarketEnv(EnvConfig(horizon=3)) for _ in range(2)], [0, 1])
    for step in range(3):
        _, _, term, trunc, final = vec.step([1, 2])
    assert trunc.all() and not term.any()
    assert len(vec.finished_returns) == 2
    assert not np.array_equal(final, vec.obs)


def test_metrics_log(tmp_path):
    log = MetricsLog(tmp_path / "m.csv")
    log.append(update_index=0, env_steps=10, mean_reward=0.5, explained_variance=None)
    rows = read_metrics(tmp_path / "m.csv")
    assert rows[0]["env_steps"] == 10 and rows[0]["mean_reward"] == 0.5 and rows[0]["explained_variance"] is None


def test_value_iteration_closed_form():
    q = value_iteration(ChainMDP(), 0.9)
    np.testing.assert_allclose(q, [[0.729, 0.81], [0.729, 0.9], [1.0, 1.0]], atol=1e-12)
