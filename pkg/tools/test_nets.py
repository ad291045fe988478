from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np


def _fd(f, x: np.ndarray, idx: tuple[int, ...], h: float = 1e-6) -> float:
    old = x[idx]
    x[idx] = old + h
    hi = f()
    x[idx] = old - h
    lo = f()
    x[idx] = old
    return (hi - lo) / (2.0 * h)


def test_mlp_backward_matches_finite_differences() -> None:
    from investesg_lab.nets import LAYER_KEYS, init_policy, mlp_backward, mlp_forward

    rng = np.random.default_rng(0)
    params = init_policy(6, 3, 16, rng)
    params["W2"] = rng.standard_normal(params["W2"].shape)  # the 0.01 output gain hides errors
    x = rng.standard_normal((5, 6))
    w = rng.standard_normal((5, 3))

    def loss() -> float:
        return float(np.sum(w * mlp_forward(params, x)[0]))

    _, cache = mlp_forward(params, x)
    grads = mlp_backward(params, cache, w)
    for key in LAYER_KEYS:
        p = params[key]
        for _ in range(4):
            idx = tuple(int(rng.integers(0, n)) for n in p.shape)
            num = _fd(loss, p, idx)
            assert abs(num - grads[key][idx]) <= 1e-5 * max(1.0, abs(num)), (key, idx, num, grads[key][idx])


def test_log_std_gradient_is_masked_outside_the_clamp() -> None:
    from investesg_lab.nets import init_policy, mlp_forward, policy_backward, policy_forward

    rng = np.random.default_rng(1)
    params = init_policy(4, 3, 8, rng)
    params["log_std"] = np.array([-6.0, 0.5, 3.0])
    x = rng.standard_normal((2, 4))
    mean, log_std = policy_forward(params, x)
    assert np.array_equal(log_std[0], [-5.0, 0.5, 2.0])
    _, cache = mlp_forward(params, x)
    grads = policy_backward(params, cache, np.zeros_like(mean), np.ones_like(mean))
    assert np.array_equal(grads["log_std"], [0.0, 2.0, 0.0])


def test_tanh_head_log_det_is_the_jacobian_of_execute() -> None:
    from investesg_lab.nets import TanhGaussianHead

    head = TanhGaussianHead(max_action=0.5)
    z = np.linspace(-4.0, 4.0, 17)[:, None]
    h = 1e-6
    jac = (head.execute(z + h) - head.execute(z - h)) / (2.0 * h)
    assert np.allclose(head.log_det(z), np.log(jac[:, 0]), atol=1e-6)
    assert np.all(np.isfinite(head.log_det(np.array([[60.0], [-60.0]]))))
    u = head.execute(np.array([[-100.0], [0.0], [100.0]]))
    assert np.allclose(u[:, 0], [0.0, 0.25, 0.5])


def test_gaussian_log_prob_gradients() -> None:
    from investesg_lab.nets import DiagGaussianHead, TanhGaussianHead

    rng = np.random.default_rng(2)
    mean = rng.standard_normal((3, 2))
    log_std = rng.uniform(-1.0, 0.5, (3, 2))
    raw = rng.standard_normal((3, 2))
    for head in (DiagGaussianHead(), TanhGaussianHead(1.0)):
        g_mean, g_log_std = head.log_prob_grads(mean, log_std, raw)
        for idx in np.ndindex(mean.shape):
            num_m = _fd(lambda: float(head.log_prob(mean, log_std, raw).sum()), mean, idx)
            num_s = _fd(lambda: float(head.log_prob(mean, log_std, raw).sum()), log_std, idx)
            assert abs(num_m - g_mean[idx]) <= 1e-6 * max(1.0, abs(num_m))
            assert abs(num_s - g_log_std[idx]) <= 1e-6 * max(1.0, abs(num_s))
        e_mean, e_log_std = head.entropy_grads(mean, log_std)
        num = _fd(lambda: float(head.entropy(mean, log_std).sum()), log_std, (0, 0))
        assert abs(num - e_log_std[0, 0]) <= 1e-6
        assert np.all(e_mean == 0.0)


def test_bernoulli_head_gradients() -> None:
    from investesg_lab.nets import BernoulliHead

    rng = np.random.default_rng(3)
    head = BernoulliHead()
    logits = rng.normal(0.0, 2.0, (4, 3))
    log_std = np.zeros(3)
    raw = head.sample(logits, log_std, rng)
    assert set(np.unique(raw)) <= {0.0, 1.0}
    assert np.array_equal(head.execute(raw), raw.astype(np.int8))
    g_logit, g_log_std = head.log_prob_grads(logits, log_std, raw)
    e_logit, _ = head.entropy_grads(logits, log_std)
    assert np.all(g_log_std == 0.0)
    for idx in np.ndindex(logits.shape):
        num = _fd(lambda: float(head.log_prob(logits, log_std, raw).sum()), logits, idx)
        assert abs(num - g_logit[idx]) <= 1e-6
        num_e = _fd(lambda: float(head.entropy(logits, log_std).sum()), logits, idx)
        assert abs(num_e - e_logit[idx]) <= 1e-6
    # probabilities of the two outcomes add up to one
    p1 = np.exp(head.log_prob(logits[:1, :1], log_std[:1], np.ones((1, 1))))
    p0 = np.exp(head.log_prob(logits[:1, :1], log_std[:1], np.zeros((1, 1))))
    assert np.isclose(p0 + p1, 1.0)


def test_sample_and_logprob_uses_the_head() -> None:
    from investesg_lab.nets import GaussianThresholdHead, sample_and_logprob

    head = GaussianThresholdHead()
    mean = np.array([[-3.0, 3.0]])
    raw, logp = sample_and_logprob(mean, np.full((1, 2), -5.0), np.random.default_rng(4), head)
    assert np.allclose(logp, head.log_prob(mean, np.full((1, 2), -5.0), raw))
    assert np.array_equal(head.execute(raw), [[0, 1]])


def test_adam_first_step_moves_by_learning_rate() -> None:
    from investesg_lab.nets import adam_step, init_optimizer

    rng = np.random.default_rng(5)
    params = {"w": rng.standard_normal(10)}
    grads = {"w": rng.uniform(0.5, 2.0, 10) * rng.choice([-1.0, 1.0], 10)}
    state = init_optimizer(params, lr=1e-3)
    new, state2 = adam_step(params, grads, state)
    assert np.allclose(params["w"] - new["w"], 1e-3 * np.sign(grads["w"]), rtol=1e-5)
    assert state2.step == 1 and state.step == 0
    assert np.all(state.m["w"] == 0.0)


def test_adam_rejects_non_finite_gradients() -> None:
    from investesg_lab.errors import TrainingError
    from investesg_lab.nets import adam_step, init_optimizer

    params = {"w": np.zeros(3)}
    state = init_optimizer(params, lr=1e-3)
    try:
        adam_step(params, {"w": np.array([0.0, np.nan, 1.0])}, state, batch=7)
    except TrainingError as e:
        assert e.batch == 7
    else:
        raise AssertionError("expected TrainingError")


def test_sampled_actions_follow_the_reported_density() -> None:
    from scipy import integrate

    from investesg_lab.nets import DiagGaussianHead, TanhGaussianHead, sample_and_logprob

    rng = np.random.default_rng(6)
    n = 200_000
    cases = (
        (DiagGaussianHead(), 0.3, -0.5, np.linspace(-1.5, 2.1, 13), lambda x: x),
        (TanhGaussianHead(0.5), 0.2, -0.3, np.linspace(0.0, 0.5, 11), lambda u: np.arctanh(4.0 * u - 1.0)),
    )
    for head, mu, ls, edges, to_raw in cases:
        mean = np.full((n, 1), mu)
        log_std = np.full((n, 1), ls)
        raw, logp = sample_and_logprob(mean, log_std, rng, head)
        assert np.allclose(logp, head.log_prob(mean, log_std, raw))
        action = head.execute(raw)[:, 0]

        def density(v: float) -> float:
            z = np.array([[to_raw(v)]])
            return float(np.exp(head.log_prob(np.array([[mu]]), np.array([[ls]]), z))[0])

        counts, _ = np.histogram(action, bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            mass, _ = integrate.quad(density, lo, hi)
            se = np.sqrt(max(mass * (1.0 - mass), 1e-12) / n)
            assert abs(c / n - mass) <= 5.0 * se + 1e-4, (type(head).__name__, lo, hi, c / n, mass)


def test_gaussian_log_prob_is_symmetric_about_the_mean() -> None:
    from investesg_lab.nets import DiagGaussianHead

    rng = np.random.default_rng(7)
    head = DiagGaussianHead()
    mean = rng.standard_normal((6, 3))
    log_std = rng.uniform(-2.0, 1.0, (6, 3))
    offset = rng.standard_normal((6, 3))
    assert np.allclose(head.log_prob(mean, log_std, mean + offset), head.log_prob(mean, log_std, mean - offset))
    assert np.all(head.log_prob(mean, log_std, mean) >= head.log_prob(mean, log_std, mean + offset))


def test_gaussian_entropy_grows_with_log_std() -> None:
    from investesg_lab.nets import DiagGaussianHead

    head = DiagGaussianHead()
    log_std = np.linspace(-5.0, 2.0, 50)[:, None]
    entropy = head.entropy(np.zeros_like(log_std), log_std)
    assert np.all(np.diff(entropy) > 0.0)
    assert np.allclose(np.diff(entropy), np.diff(log_std[:, 0]))


def test_adam_with_zero_gradients_only_counts_the_step() -> None:
    from investesg_lab.nets import adam_step, init_optimizer

    rng = np.random.default_rng(8)
    params = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4)}
    state = init_optimizer(params, lr=1e-2)
    for expected_step in (1, 2, 3):
        new, state = adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state)
        assert state.step == expected_step
        for k in params:
            assert np.array_equal(new[k], params[k]), k


def test_clip_by_global_norm() -> None:
    from investesg_lab.nets import clip_by_global_norm, global_norm

    grads = {"a": np.array([3.0]), "b": np.array([[4.0]])}
    assert global_norm(grads) == 5.0
    clipped, norm = clip_by_global_norm(grads, 1.0)
    assert norm == 5.0
    assert np.allclose(clipped["a"], [0.6]) and np.allclose(clipped["b"], [[0.8]])
    same, _ = clip_by_global_norm(grads, 10.0)
    assert same["a"] is grads["a"]


def test_orthogonal_init_and_value_shapes() -> None:
    from investesg_lab.errors import InputError
    from investesg_lab.nets import init_value, orthogonal, value_forward

    rng = np.random.default_rng(6)
    w = orthogonal((12, 5), 2.0, rng)
    assert np.allclose(w.T @ w, 4.0 * np.eye(5))
    wide = orthogonal((3, 7), 1.0, rng)
    assert np.allclose(wide @ wide.T, np.eye(3))

    params = init_value(4, 8, rng)
    assert np.ndim(value_forward(params, np.ones(4))) == 0
    assert value_forward(params, np.ones((3, 4))).shape == (3,)
    try:
        value_forward(params, np.ones((3, 5)))
    except InputError:
        pass
    else:
        raise AssertionError("expected InputError")


def test_checkpoint_round_trip_is_bit_exact() -> None:
    from investesg_lab.nets import CHECKPOINT_VERSION, init_policy, load_checkpoint, save_checkpoint

    rng = np.random.default_rng(7)
    groups = {"policy/company": init_policy(5, 1, 8, rng), "value/company": {"W0": rng.standard_normal((5, 8))}}
    meta = {"update": 3, "rng_state": rng.bit_generator.state}
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "ck" / "update_00000003.npz"
        save_checkpoint(path, groups, meta)
        loaded, loaded_meta = load_checkpoint(path)
        assert not list(path.parent.glob("*.tmp"))
    assert set(loaded) == set(groups)
    for g, group in groups.items():
        for k, v in group.items():
            assert loaded[g][k].dtype == v.dtype
            assert np.array_equal(loaded[g][k], v)
    assert loaded_meta["format_version"] == CHECKPOINT_VERSION
    restored = np.random.default_rng()
    restored.bit_generator.state = loaded_meta["rng_state"]
    assert np.array_equal(restored.random(5), rng.random(5))


def test_unknown_checkpoint_format_is_rejected() -> None:
    from investesg_lab.errors import InputError
    from investesg_lab.nets import load_checkpoint

    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "old.npz"
        np.savez(path, **{"__meta__": np.array(json.dumps({"format_version": 99})), "policy/x": np.zeros(2)})
        try:
            load_checkpoint(path)
        except InputError:
            return
    raise AssertionError("expected InputError")


def main() -> None:
    # Run from repo root with: PYTHONPATH=src python3 tools/test_nets.py
    test_mlp_backward_matches_finite_differences()
    test_log_std_gradient_is_masked_outside_the_clamp()
    test_tanh_head_log_det_is_the_jacobian_of_execute()
    test_gaussian_log_prob_gradients()
    test_bernoulli_head_gradients()
    test_sample_and_logprob_uses_the_head()
    test_adam_first_step_moves_by_learning_rate()
    test_adam_rejects_non_finite_gradients()
    test_sampled_actions_follow_the_reported_density()
    test_gaussian_log_prob_is_symmetric_about_the_mean()
    test_gaussian_entropy_grows_with_log_std()
    test_adam_with_zero_gradients_only_counts_the_step()
    test_clip_by_global_norm()
    test_orthogonal_init_and_value_shapes()
    test_checkpoint_round_trip_is_bit_exact()
    test_unknown_checkpoint_format_is_rejected()
    print("OK: networks, heads, Adam and checkpoints.")


if __name__ == "__main__":
    main()
