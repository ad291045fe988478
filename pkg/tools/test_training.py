from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np


def _tiny_env():
    from investesg_lab.config import EnvConfig

    return EnvConfig(num_companies=1, num_investors=1, episode_length=5).validate()


def _tiny_train(**kw):
    from investesg_lab.config import TrainConfig

    base = dict(num_envs=2, total_steps=10_000, hidden_size=8, num_minibatches=2, log_every=1000, seed=3)
    base.update(kw)
    return TrainConfig(**base).validate(num_agents=2)


def _assert_same_params(a: dict, b: dict) -> None:
    assert set(a) == set(b)
    for g in a:
        for k in a[g]:
            assert np.array_equal(a[g][k], b[g][k]), (g, k)


def test_alignment_with_zero_beta_is_identity() -> None:
    from investesg_lab.training import align_advantages

    adv = np.random.default_rng(0).standard_normal((3, 7, 4))
    assert np.array_equal(align_advantages(adv, 0.0, 0.9), adv)


def test_alignment_matches_the_direct_sum() -> None:
    from investesg_lab.training import align_advantages, cooperative_bias

    rng = np.random.default_rng(1)
    adv = rng.standard_normal((2, 6, 3))
    beta, g = 0.3, 0.8
    out = align_advantages(adv, beta, g)
    past = np.zeros_like(adv)
    for e in range(2):
        for t in range(6):
            for i in range(3):
                s = sum(g ** (t - k) * adv[e, k, i] for k in range(t))
                past[e, t, i] = s
                others = adv[e, t].sum() - adv[e, t, i]
                expected = adv[e, t, i] + beta * g * s * others
                assert np.isclose(out[e, t, i], expected, rtol=1e-12, atol=1e-12)
    assert np.allclose(cooperative_bias(adv, g), past.mean(axis=(0, 1)))
    assert np.all(past[:, 0] == 0.0)


def test_gae_limits() -> None:
    from investesg_lab.training import gae

    rng = np.random.default_rng(2)
    rewards = rng.standard_normal((2, 8, 3))
    values = rng.standard_normal((2, 8, 3))
    gamma = 0.97

    _, returns = gae(rewards, values, gamma, 1.0)
    mc = np.zeros_like(rewards)
    running = np.zeros_like(rewards[:, 0])
    for t in reversed(range(8)):
        running = rewards[:, t] + gamma * running
        mc[:, t] = running
    assert np.allclose(returns, mc, rtol=1e-12, atol=1e-12)

    adv0, _ = gae(rewards, values, gamma, 0.0)
    next_v = np.concatenate([values[:, 1:], np.zeros_like(values[:, :1])], axis=1)
    assert np.allclose(adv0, rewards + gamma * next_v - values, rtol=1e-12, atol=1e-12)


def test_first_epoch_ppo_gradient_equals_reinforce() -> None:
    from investesg_lab.nets import TanhGaussianHead, init_policy, mlp_forward
    from investesg_lab.training import policy_loss_and_grads, reinforce_gradient

    rng = np.random.default_rng(4)
    head = TanhGaussianHead(1.0)
    params = init_policy(6, 1, 8, rng, mean_bias=-1.0)
    params["log_std"] = np.array([-0.5])
    obs = rng.standard_normal((32, 6))
    raw = rng.standard_normal((32, 1))
    mean, _ = mlp_forward(params, obs)
    old = head.log_prob(mean, np.full_like(mean, -0.5), raw)
    adv = rng.standard_normal(32)
    _, ppo, stats = policy_loss_and_grads(
        params, head, obs, raw, old, adv, clip_eps=0.2, entropy_coef=0.0, log_std_range=(-5.0, 2.0)
    )
    ref = reinforce_gradient(params, head, obs, raw, adv, log_std_range=(-5.0, 2.0))
    for k in ref:
        assert np.allclose(ppo[k], ref[k], rtol=1e-9, atol=1e-12), k
    assert stats["clip_fraction"] == 0.0
    assert abs(stats["approx_kl"]) < 1e-12


def test_equal_advantages_leave_the_policy_untouched() -> None:
    from investesg_lab.training import (
        build_agents,
        collect_rollouts,
        init_train_state,
        make_policies,
        policy_loss_and_grads,
        ppo_update,
    )

    env = _tiny_env()
    cfg = _tiny_train(entropy_coef=0.0, epochs=2)
    agents = build_agents(env, cfg)
    state = init_train_state(env, cfg, agents)
    buf = collect_rollouts(env, make_policies(state, agents, cfg), cfg.num_envs, np.random.default_rng(1))
    # 2.0 is exact under summation, so normalization maps it to exactly zero
    buf.advantages = np.full(buf.rewards.shape, 2.0)
    buf.values = np.zeros(buf.rewards.shape)
    buf.returns = np.zeros(buf.rewards.shape)

    spec = agents[0]
    obs = buf.obs[:, :, spec.index].reshape(-1, buf.obs.shape[-1])
    raw = buf.raw_actions[spec.index].reshape(obs.shape[0], -1)
    old = buf.log_probs[:, :, spec.index].reshape(-1)
    _, grads, _ = policy_loss_and_grads(
        state.policies[spec.group],
        spec.head,
        obs,
        raw,
        old,
        np.zeros(obs.shape[0]),
        clip_eps=cfg.clip_eps,
        entropy_coef=0.0,
        log_std_range=(cfg.log_std_min, cfg.log_std_max),
    )
    for k, g in grads.items():
        assert np.all(g == 0.0), k

    before = {g: {k: v.copy() for k, v in p.items()} for g, p in state.policies.items()}
    ppo_update(state, agents, buf, cfg)
    _assert_same_params(before, state.policies)
    assert all(opt.step == cfg.resolved_epochs * cfg.num_minibatches for opt in state.policy_opt.values())


def test_rollout_shapes() -> None:
    from investesg_lab.training import build_agents, collect_rollouts, init_train_state, make_policies

    env = _tiny_env()
    cfg = _tiny_train()
    agents = build_agents(env, cfg)
    state = init_train_state(env, cfg, agents)
    buf = collect_rollouts(env, make_policies(state, agents, cfg), 3, np.random.default_rng(0))
    assert buf.shape == (3, 5, 2)
    assert buf.obs.shape[:3] == (3, 5, 2)
    assert buf.raw_actions[0].shape == (3, 5, 1) and buf.raw_actions[1].shape == (3, 5, 1)
    assert buf.dones[:, -1].all() and not buf.dones[:, :-1].any()
    assert np.all((buf.mitigation >= 0.0) & (buf.mitigation <= env.max_mitigation))
    assert len(buf.final_states) == 3


def test_rollout_errors_name_the_environment() -> None:
    from investesg_lab.errors import ActionError, InputError
    from investesg_lab.training import FixedPolicy, collect_rollouts

    env = _tiny_env()
    policies = [FixedPolicy(np.array([2.0])), FixedPolicy(np.ones(1))]
    try:
        collect_rollouts(env, policies, 2, np.random.default_rng(0))
    except ActionError as e:
        assert e.env_index == 0
    else:
        raise AssertionError("expected ActionError")
    for bad in (lambda: collect_rollouts(env, policies, 0, np.random.default_rng(0)),
                lambda: collect_rollouts(env, policies[:1], 2, np.random.default_rng(0))):
        try:
            bad()
        except InputError:
            continue
        raise AssertionError("expected InputError")


def test_self_play_shares_one_parameter_set_per_role() -> None:
    from investesg_lab.config import EnvConfig
    from investesg_lab.training import build_agents, init_train_state

    env = EnvConfig(num_companies=3, num_investors=2, episode_length=5).validate()
    cfg = _tiny_train(algorithm="AdAlign")
    agents = build_agents(env, cfg)
    assert [a.group for a in agents] == ["company"] * 3 + ["investor"] * 2
    assert set(init_train_state(env, cfg, agents).policies) == {"company", "investor"}

    ippo = build_agents(env, _tiny_train())
    assert len({a.group for a in ippo}) == 5
    assert all(a.action_dim == 3 for a in ippo if a.role == "investor")
    assert not any(a.centralized_critic for a in ippo)
    assert all(a.centralized_critic for a in build_agents(env, _tiny_train(algorithm="MAPPO")))


def test_centralized_critics_read_the_global_state() -> None:
    from investesg_lab.config import EnvConfig
    from investesg_lab.env import global_dim
    from investesg_lab.training import (
        build_agents,
        collect_rollouts,
        critic_features,
        critic_input_dim,
        init_train_state,
        make_policies,
    )

    env = EnvConfig(num_companies=2, num_investors=1, episode_length=4).validate()
    g = global_dim(env)
    for cfg, width in (
        (_tiny_train(algorithm="MAPPO"), g),
        # one critic per role also needs to know which member it is scoring
        (_tiny_train(algorithm="MAPPO", self_play=True), g + env.num_agents),
    ):
        agents = build_agents(env, cfg)
        state = init_train_state(env, cfg, agents)
        buf = collect_rollouts(env, make_policies(state, agents, cfg), 2, np.random.default_rng(0))
        for spec in agents:
            assert critic_input_dim(env, spec) == width
            feats = critic_features(buf, spec)
            assert feats.shape == (2, 4, width)
            assert np.array_equal(feats[..., :g], buf.global_obs)


def test_invalid_train_configs_are_rejected() -> None:
    from investesg_lab.config import TrainConfig
    from investesg_lab.errors import ConfigError

    cases = [
        (dict(algorithm="IPPO", centralized_critic=True), None),
        (dict(algorithm="MAPPO", centralized_critic=False), None),
        (dict(algorithm="AdAlign"), 1),
        (dict(algorithm="AdAlign", aa_beta=-0.1), None),
        (dict(algorithm="PPO"), None),
        (dict(num_envs=0), None),
    ]
    for kw, agents in cases:
        try:
            TrainConfig(**kw).validate(num_agents=agents)
        except ConfigError:
            continue
        raise AssertionError(f"expected ConfigError for {kw}")


def test_sum_reward_shaping() -> None:
    from investesg_lab.config import TrainConfig
    from investesg_lab.training import shape_rewards

    r = np.arange(12.0).reshape(2, 2, 3)
    summed = shape_rewards(r, TrainConfig(algorithm="SumReward", reward_scale=0.5))
    assert np.allclose(summed, 0.5 * r.sum(axis=-1, keepdims=True).repeat(3, axis=-1))
    assert np.array_equal(shape_rewards(r, TrainConfig()), r)


def test_zero_beta_alignment_trains_like_ippo() -> None:
    from investesg_lab.training import train

    env = _tiny_env()
    ippo = train(env, _tiny_train(epochs=2), max_updates=10)
    aa = train(env, _tiny_train(algorithm="AdAlign", aa_beta=0.0, self_play=False, epochs=2), max_updates=10)
    _assert_same_params(ippo.state.policies, aa.state.policies)
    _assert_same_params(ippo.state.critics, aa.state.critics)
    for a, b in zip(ippo.history, aa.history):
        assert a["market_total_wealth"] == b["market_total_wealth"]


def test_resume_reproduces_the_uninterrupted_run() -> None:
    from investesg_lab.training import latest_checkpoint, train

    env = _tiny_env()
    cfg = _tiny_train(algorithm="AdAlign")
    full = train(env, cfg, max_updates=6)
    with tempfile.TemporaryDirectory() as td:
        ck = Path(td) / "checkpoints"
        first = train(env, cfg, checkpoint_dir=ck, max_updates=3)
        assert len(first.history) == 3
        assert latest_checkpoint(ck).name == "update_00000003.npz"
        second = train(env, cfg, checkpoint_dir=ck, resume=True, max_updates=6)
    assert [r["update"] for r in second.history] == [4, 5, 6]
    _assert_same_params(full.state.policies, second.state.policies)
    _assert_same_params(full.state.critics, second.state.critics)
    assert full.history[-1]["market_total_wealth"] == second.history[-1]["market_total_wealth"]
    assert second.state.env_steps == 6 * cfg.num_envs * env.episode_length


def test_history_rows_carry_metrics_and_losses() -> None:
    from investesg_lab.config import EnvConfig
    from investesg_lab.training import train

    env = EnvConfig(num_companies=2, num_investors=1, episode_length=5).validate()
    rows: list[dict] = []
    res = train(env, _tiny_train(algorithm="MAPPO", investor_head="bernoulli"), max_updates=2, on_update=rows.append)
    assert rows == res.history and len(rows) == 2
    for key in (
        "market_total_wealth",
        "final_mitigation",
        "climate_risk",
        "gini_capital",
        "gini_investment",
        "policy_loss",
        "value_loss",
        "entropy",
        "approx_kl",
        "clip_fraction",
        "coop_bias",
        "coop_bias_company",
        "coop_bias_investor",
    ):
        assert key in rows[-1], key
    assert rows[-1]["market_total_wealth"] > 0.0
    assert rows[-1]["algorithm"] == "MAPPO" and rows[-1]["env_steps"] == 2 * 2 * 5


def test_evaluate_is_seeded_and_checkpoint_loads() -> None:
    from investesg_lab.training import evaluate, latest_checkpoint, load_policy_checkpoint, train

    env = _tiny_env()
    cfg = _tiny_train()
    with tempfile.TemporaryDirectory() as td:
        ck = Path(td)
        res = train(env, cfg, checkpoint_dir=ck, max_updates=1)
        env2, cfg2, state2, agents2 = load_policy_checkpoint(latest_checkpoint(ck))
    assert env2.to_dict() == res.env_config.to_dict()
    assert cfg2.to_dict() == cfg.to_dict()
    a = evaluate(env, res.state, res.agents, cfg, episodes=2, seed=9)
    b = evaluate(env2, state2, agents2, cfg2, episodes=2, seed=9)
    assert len(a) == 2
    for x, y in zip(a, b):
        assert np.array_equal(x.rewards, y.rewards)


def main() -> None:
    # Run from repo root with: PYTHONPATH=src python3 tools/test_training.py
    test_alignment_with_zero_beta_is_identity()
    test_alignment_matches_the_direct_sum()
    test_gae_limits()
    test_first_epoch_ppo_gradient_equals_reinforce()
    test_equal_advantages_leave_the_policy_untouched()
    test_rollout_shapes()
    test_rollout_errors_name_the_environment()
    test_self_play_shares_one_parameter_set_per_role()
    test_centralized_critics_read_the_global_state()
    test_invalid_train_configs_are_rejected()
    test_sum_reward_shaping()
    test_zero_beta_alignment_trains_like_ippo()
    test_resume_reproduces_the_uninterrupted_run()
    test_history_rows_carry_metrics_and_losses()
    test_evaluate_is_seeded_and_checkpoint_loads()
    print("OK: rollouts, advantages, PPO updates and resume.")


if __name__ == "__main__":
    main()
