from dataclasses import replace

import numpy as np
import pytest

import oracles
from uavnet.config import PPOConfig, config_from_dict
from uavnet.environment import UavNetworkEnv
from uavnet.learner import MLP, Adam, HybridPolicy, RolloutBuffer, gae, ppo_update, train
from uavnet.learner.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from uavnet.learner.nn import clip_by_global_norm, global_norm
from uavnet.learner.policy import categorical_entropy, gaussian_log_prob, log_softmax
from uavnet.learner.ppo import Agent, RunningNorm


def tiny_cfg(**ppo):
    base = {"episodes": 2, "update_every_episodes": 1, "epochs": 2, "batch_size": 16,
            "hidden": [8, 8]}
    base.update(ppo)
    return config_from_dict({"uav": {"count": 1}, "scenario": {"obstacles": [], "n_users": 2},
                             "mdp": {"horizon": 12}, "ppo": base})


# -- GAE -----------------------------------------------------------------------------

def test_gae_special_cases():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=20), rng.normal(size=20)
    d = np.zeros(20, dtype=bool)
    d[-1] = True
    nxt = np.append(v[1:], 0.0)
    np.testing.assert_allclose(gae(r, v, d, 0.9, 0.0), r + 0.9 * nxt - v, atol=1e-14)
    np.testing.assert_allclose(gae(r, v, d, 0.0, 0.7), r - v, atol=1e-14)
    with pytest.raises(ValueError):
        gae(r, v[:-1], d)


def test_gae_matches_double_sum():
    rng = np.random.default_rng(1)
    for _ in range(100):
        r, v = rng.normal(size=100), rng.normal(size=100)
        d = rng.random(100) < 0.05
        d[-1] = True
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.5, 1.0)
        np.testing.assert_allclose(gae(r, v, d, gamma, lam),
                                   oracles.gae_double_sum(r, v, d, gamma, lam), atol=1e-10)


# -- networks and optimiser ----------------------------------------------------------

def test_zero_network_outputs():
    pol = HybridPolicy(5, 2, 3, hidden=(4, 4))
    actor, critic = pol.init_params(np.random.default_rng(0))
    for p in (actor, critic):
        for k in p:
            if k != "log_std":
                p[k][...] = 0.0
    mean, log_std, logits, value = pol.forward(actor, critic, np.ones((2, 5)))
    assert np.all(mean == 0) and np.all(value == 0)
    np.testing.assert_allclose(log_softmax(logits), np.log(1 / 2))
    np.testing.assert_allclose(categorical_entropy(logits), np.log(2))


def test_gaussian_log_prob_at_mean():
    d = 6
    assert gaussian_log_prob(np.zeros(d), np.zeros(d), np.zeros(d)) == pytest.approx(-d / 2 * np.log(2 * np.pi))


def test_joint_log_prob_factorises():
    rng = np.random.default_rng(2)
    pol = HybridPolicy(7, 2, 4, hidden=(6, 5))
    actor, critic = pol.init_params(rng, -0.5)
    obs = rng.normal(size=(10, 7))
    a_c = rng.normal(size=(10, 6))
    a_d = rng.integers(0, 2, (10, 4))
    mean, log_std, logits, _ = pol.forward(actor, critic, obs)
    var = np.exp(2 * log_std)
    gauss = np.sum(-0.5 * (a_c - mean) ** 2 / var - 0.5 * np.log(2 * np.pi * var), axis=1)
    p = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    cat = np.log(np.take_along_axis(p, a_d[..., None], -1)[..., 0]).sum(1)
    np.testing.assert_allclose(pol.log_prob(actor, obs, a_c, a_d), gauss + cat, rtol=1e-10)


def test_dimension_mismatch_rejected():
    pol = HybridPolicy(5, 1, 2, hidden=(4,))
    actor, critic = pol.init_params(np.random.default_rng(0))
    with pytest.raises(ValueError):
        pol.forward(actor, critic, np.ones(6))


def _fd_check(loss_fn, params, grads, rng, n_probe=25):
    worst = 0.0
    for k, v in params.items():
        flat = v.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + 1e-5
            up = loss_fn()
            flat[i] = old - 1e-5
            down = loss_fn()
            flat[i] = old
            num = (up - down) / 2e-5
            ana = grads[k].reshape(-1)[i]
            denom = max(abs(num) + abs(ana), 1e-6)
            worst = max(worst, abs(num - ana) / denom)
    return worst


def _perturbed_policy(rng):
    pol = HybridPolicy(6, 2, 3, hidden=(7, 5))
    actor, critic = pol.init_params(rng, -0.3)
    for p in (actor, critic):
        for k in p:
            p[k] = p[k] + 0.3 * rng.standard_normal(p[k].shape)
    return pol, actor, critic


def test_actor_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    pol, actor, _ = _perturbed_policy(rng)
    B = 32
    obs = rng.normal(size=(B, 6))
    a_c = rng.normal(size=(B, 6))
    a_d = rng.integers(0, 2, (B, 3))
    lp = pol.log_prob(actor, obs, a_c, a_d)
    logp_old = lp + rng.uniform(-0.3, 0.3, B)
    adv = rng.normal(size=B)
    _, grads, _ = pol.actor_loss_and_grad(actor, obs, a_c, a_d, logp_old, adv, 0.2, 0.05)
    fn = lambda: pol.actor_loss_and_grad(actor, obs, a_c, a_d, logp_old, adv, 0.2, 0.05)[0]  # noqa: E731
    assert _fd_check(fn, actor, grads, rng) < 1e-4


def test_critic_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    pol, _, critic = _perturbed_policy(rng)
    obs, ret = rng.normal(size=(20, 6)), rng.normal(size=20)
    _, grads = pol.critic_loss_and_grad(critic, obs, ret)
    fn = lambda: pol.critic_loss_and_grad(critic, obs, ret)[0]  # noqa: E731
    assert _fd_check(fn, critic, grads, rng) < 1e-4


def test_ratio_one_gives_policy_gradient_and_clip_saturation_zeroes_it():
    rng = np.random.default_rng(5)
    pol, actor, _ = _perturbed_policy(rng)
    B = 8
    obs = rng.normal(size=(B, 6))
    a_c = rng.normal(size=(B, 6))
    a_d = rng.integers(0, 2, (B, 3))
    lp = pol.log_prob(actor, obs, a_c, a_d)
    adv = rng.normal(size=B)
    loss, g1, info = pol.actor_loss_and_grad(actor, obs, a_c, a_d, lp, adv, 0.2, 0.0)
    assert loss == pytest.approx(-adv.mean())
    assert info["clip_frac"] == 0.0
    # unclipped surrogate equals the clipped one when every ratio is inside the band
    assert info["surrogate"] == pytest.approx(np.mean(adv), abs=1e-12)
    # positive advantages with ratio above 1 + eps contribute nothing
    adv_pos = np.abs(adv) + 0.1
    _, g2, info2 = pol.actor_loss_and_grad(actor, obs, a_c, a_d, lp - 1.0, adv_pos, 0.2, 0.0)
    assert info2["clip_frac"] == 1.0
    assert all(np.all(g == 0) for g in g2.values())


def test_clip_by_global_norm():
    g = {"a": np.full(4, 3.0), "b": np.full(1, 4.0)}
    clipped, n = clip_by_global_norm(g, 1.0)
    assert n == pytest.approx(np.sqrt(52.0))
    assert global_norm(clipped) == pytest.approx(1.0)
    same, _ = clip_by_global_norm(g, 100.0)
    assert same["a"] is g["a"]


def test_adam_minimises_quadratic_and_round_trips_state():
    params = {"x": np.array([3.0, -2.0])}
    opt = Adam(params, lr=0.1)
    for _ in range(500):
        opt.step(params, {"x": 2 * params["x"]})
    assert np.all(np.abs(params["x"]) < 1e-2)
    other = Adam(params, lr=0.1)
    other.load_state_dict(opt.state_dict())
    assert other.t == 500
    np.testing.assert_array_equal(other.m["x"], opt.m["x"])


def test_mlp_requires_two_sizes():
    with pytest.raises(ValueError):
        MLP([3])


def test_running_norm_matches_batch_statistics():
    rng = np.random.default_rng(6)
    x = rng.normal(3.0, 2.0, size=(500, 4))
    norm = RunningNorm(4)
    for chunk in np.array_split(x, 7):
        norm.update(chunk)
    np.testing.assert_allclose(norm.mean, x.mean(0), rtol=1e-6)
    np.testing.assert_allclose(norm.var, x.var(0), rtol=1e-4)


# -- buffer, update and training loop -----------------------------------------------

def test_buffer_contract():
    buf = RolloutBuffer(capacity=2)
    buf.add(np.zeros(3), np.zeros(2), np.zeros(1), 0.0, 1.0, 0.0, False)
    with pytest.raises(RuntimeError):
        buf.arrays()
    buf.add(np.zeros(3), np.zeros(2), np.zeros(1), 0.0, 1.0, 0.0, True)
    with pytest.raises(OverflowError):
        buf.add(np.zeros(3), np.zeros(2), np.zeros(1), 0.0, 1.0, 0.0, True)
    buf.compute_advantages(0.9, 0.9)
    assert buf.arrays()[4].shape == (2,)


def test_update_clears_buffer_and_skips_non_finite():
    cfg = tiny_cfg()
    env = UavNetworkEnv(cfg)
    agent = Agent.create(env.obs_dim, env.n_uav, env.n_user, cfg.ppo, 0)
    buf = RolloutBuffer()
    obs = env.reset(1)
    for t in range(5):
        a_c, a_d, lp, v = agent.act(obs)
        obs2, r, done, _ = env.step(agent.to_action(a_c, a_d))
        buf.add(obs, a_c, a_d, lp, r, v, t == 4)
        obs = obs2
    buf.compute_advantages(0.99, 0.95)
    m = ppo_update(agent, buf)
    assert len(buf) == 0 and m["samples"] == 5 and m["skipped"] == 0
    # a poisoned observation produces non-finite gradients that must be skipped
    obs_bad = np.full(env.obs_dim, np.nan)
    buf.add(obs_bad, a_c, a_d, lp, 1.0, v, True)
    buf.add(obs_bad, a_c, a_d, lp, 1.0, v, True)
    buf.compute_advantages(0.99, 0.95)
    before = {k: v.copy() for k, v in agent.actor.items()}
    m = ppo_update(agent, buf)
    assert m["skipped"] > 0 and agent.incidents
    for k in before:
        np.testing.assert_array_equal(agent.actor[k], before[k])


def test_zero_episodes_returns_initial_parameters():
    cfg = tiny_cfg()
    env = UavNetworkEnv(cfg)
    fresh = Agent.create(env.obs_dim, env.n_uav, env.n_user, cfg.ppo, 5)
    res = train(lambda: UavNetworkEnv(cfg), cfg.ppo, 5, episodes=0)
    assert res.log == [] and res.updates == []
    for k in fresh.actor:
        np.testing.assert_array_equal(res.agent.actor[k], fresh.actor[k])


def test_training_is_deterministic():
    cfg = tiny_cfg(normalize_obs=True)
    a = train(lambda: UavNetworkEnv(cfg), cfg.ppo, 3)
    b = train(lambda: UavNetworkEnv(cfg), cfg.ppo, 3)
    strip = lambda log: [(s.episode, s.mean_reward, s.mean_s_total, s.slots) for s in log]  # noqa: E731
    assert strip(a.log) == strip(b.log)
    assert len(a.updates) == 2
    for k in a.agent.actor:
        np.testing.assert_array_equal(a.agent.actor[k], b.agent.actor[k])


def test_checkpoint_round_trip_is_bit_identical(tmp_path):
    cfg = tiny_cfg(normalize_obs=True)
    res = train(lambda: UavNetworkEnv(cfg), cfg.ppo, 4)
    path = save_checkpoint(res.agent, tmp_path / "ck.npz")
    env = UavNetworkEnv(cfg)
    loaded = load_checkpoint(path, obs_dim=env.obs_dim)
    obs = np.random.default_rng(0).normal(size=(6, env.obs_dim))
    orig = res.agent.policy.forward(res.agent.actor, res.agent.critic, res.agent.features(obs))
    back = loaded.policy.forward(loaded.actor, loaded.critic, loaded.features(obs))
    for x, y in zip(orig, back):
        assert np.array_equal(x, y)
    assert loaded.actor_opt.t == res.agent.actor_opt.t
    assert loaded.rng.random() == res.agent.rng.random()
    with pytest.raises(CheckpointError):
        load_checkpoint(path, obs_dim=env.obs_dim + 1)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.npz")


def test_config_hyper_defaults_are_standard():
    h = PPOConfig()
    assert (h.lr, h.clip_eps, h.gae_lambda, h.epochs, h.batch_size) == (5e-4, 0.2, 0.95, 10, 256)
    assert (h.entropy_coef, h.max_grad_norm, h.hidden, h.buffer_capacity) == (0.01, 0.5, [256, 128], 50000)


def test_target_kl_stops_epochs_early():
    cfg = tiny_cfg(epochs=30, batch_size=4, lr=1e-2)
    env = UavNetworkEnv(cfg)
    runs = {}
    for target in (None, 1e-6):
        agent = Agent.create(env.obs_dim, env.n_uav, env.n_user, replace(cfg.ppo, target_kl=target), 0)
        buf = RolloutBuffer()
        obs = env.reset(1)
        for t in range(12):
            a_c, a_d, lp, v = agent.act(obs)
            obs2, r, _, _ = env.step(agent.to_action(a_c, a_d))
            buf.add(obs, a_c, a_d, lp, r, v, t == 11)
            obs = obs2
        buf.compute_advantages(0.99, 0.95)
        runs[target] = ppo_update(agent, buf)
        assert len(buf) == 0
    assert runs[1e-6]["early_stop"] and not runs[None]["early_stop"]
