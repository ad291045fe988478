"""
Rollouts and PPO-family optimisation for the climate-investment game.

Variants share one loop: collect -> GAE -> (align) -> clipped PPO update. IPPO gives every agent
its own actor and critic; MAPPO swaps in critics on the global state; SumReward trains every agent
on the summed reward; AdAlign adds the advantage-alignment term and shares parameters per role.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .config import EnvConfig, TrainConfig
from .env import (
    OBS_LAYOUT_VERSION,
    Episode,
    EnvState,
    JointAction,
    VecInvestESGEnv,
    agent_names,
    describe_investor_reward,
    global_dim,
    obs_dim,
    run_episode,
)
from .errors import InputError, TrainingError
from .metrics import gini, market_total_wealth
from .nets import (
    ActionHead,
    AdamHyper,
    BernoulliHead,
    GaussianThresholdHead,
    OptimizerState,
    Params,
    TanhGaussianHead,
    adam_step,
    clip_by_global_norm,
    init_optimizer,
    init_policy,
    init_value,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    policy_backward,
    save_checkpoint,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentSpec:
    index: int
    name: str
    role: str
    group: str
    action_dim: int
    head: ActionHead
    centralized_critic: bool

    @property
    def shares_parameters(self) -> bool:
        return self.group != self.name


def build_agents(env_config: EnvConfig, train_config: TrainConfig) -> list[AgentSpec]:
    shared = train_config.resolved_self_play
    central = train_config.resolved_centralized_critic
    investor_head: ActionHead = BernoulliHead() if train_config.investor_head == "bernoulli" else GaussianThresholdHead()
    company_head = TanhGaussianHead(env_config.max_mitigation)
    out: list[AgentSpec] = []
    for k, name in enumerate(agent_names(env_config)):
        role = "company" if k < env_config.num_companies else "investor"
        out.append(
            AgentSpec(
                index=k,
                name=name,
                role=role,
                group=role if shared else name,
                action_dim=1 if role == "company" else env_config.num_companies,
                head=company_head if role == "company" else investor_head,
                centralized_critic=central,
            )
        )
    return out


class AgentPolicy(Protocol):
    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """obs (E, D) -> (raw action (E, d), log-prob (E,), executed action (E, d))."""
        ...


@dataclass
class NeuralPolicy:
    params: Params
    head: ActionHead
    log_std_range: tuple[float, float]

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mean, _ = mlp_forward(self.params, obs)
        log_std = np.broadcast_to(np.clip(self.params["log_std"], *self.log_std_range), mean.shape)
        raw = self.head.sample(mean, log_std, rng)
        return raw, self.head.log_prob(mean, log_std, raw), self.head.execute(raw)


@dataclass
class FixedPolicy:
    action: np.ndarray

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = np.broadcast_to(np.atleast_1d(self.action), (obs.shape[0], np.size(self.action))).astype(np.float64)
        return a, np.zeros(obs.shape[0]), a


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (E, T, A, D)
    global_obs: np.ndarray  # (E, T, G)
    raw_actions: list[np.ndarray]  # per agent (E, T, d_k)
    log_probs: np.ndarray  # (E, T, A)
    rewards: np.ndarray  # (E, T, A)
    dones: np.ndarray  # (E, T)
    mitigation: np.ndarray  # (E, T, M) executed
    final_states: list[EnvState]
    values: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    aligned: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        e, t, a = self.rewards.shape
        return e, t, a


def collect_rollouts(
    env_config: EnvConfig,
    policies: Sequence[AgentPolicy],
    num_envs: int,
    rng: np.random.Generator,
) -> RolloutBuffer:
    """Run `num_envs` full episodes in lock-step; policies see every env's observation at once."""
    if num_envs < 1:
        raise InputError("num_envs must be >= 1")
    m, n = env_config.num_companies, env_config.num_investors
    a_count, t_len = env_config.num_agents, env_config.episode_length
    if len(policies) != a_count:
        raise InputError(f"expected {a_count} policies, got {len(policies)}")

    seeds = rng.integers(0, 2**63 - 1, size=num_envs)
    envs = VecInvestESGEnv(env_config, num_envs)
    obs_now = envs.reset([int(s) for s in seeds])

    d, g = obs_dim(env_config), global_dim(env_config)
    obs = np.zeros((num_envs, t_len, a_count, d))
    global_obs = np.zeros((num_envs, t_len, g))
    raw_actions = [np.zeros((num_envs, t_len, 1 if k < m else m)) for k in range(a_count)]
    log_probs = np.zeros((num_envs, t_len, a_count))
    rewards = np.zeros((num_envs, t_len, a_count))
    dones = np.zeros((num_envs, t_len), dtype=bool)
    mitigation = np.zeros((num_envs, t_len, m))

    for t in range(t_len):
        obs[:, t] = obs_now
        global_obs[:, t] = envs.global_features()
        executed: list[np.ndarray] = []
        for k, policy in enumerate(policies):
            raw, logp, act = policy.act(obs_now[:, k], rng)
            raw_actions[k][:, t] = raw
            log_probs[:, t, k] = logp
            executed.append(act)
        u = np.concatenate(executed[:m], axis=1)
        portfolio = np.stack(executed[m:], axis=1) if n else np.zeros((num_envs, 0, m))
        mitigation[:, t] = u
        outcome = envs.step(u, portfolio)
        rewards[:, t] = outcome.rewards
        dones[:, t] = outcome.done
        obs_now = outcome.observations

    return RolloutBuffer(
        obs=obs,
        global_obs=global_obs,
        raw_actions=raw_actions,
        log_probs=log_probs,
        rewards=rewards,
        dones=dones,
        mitigation=mitigation,
        final_states=envs.states(),
    )


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Time is axis 1; episodes are complete so the value after the last step is 0."""
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[:, 0])
    t_len = rewards.shape[1]
    for t in reversed(range(t_len)):
        next_value = values[:, t + 1] if t + 1 < t_len else 0.0
        delta = rewards[:, t] + gamma * next_value - values[:, t]
        last = delta + gamma * lam * last
        adv[:, t] = last
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    if buffer.values is None:
        raise InputError("buffer values must be filled before computing GAE")
    adv, ret = gae(buffer.rewards, buffer.values, gamma, lam)
    buffer.advantages, buffer.returns = adv, ret
    return adv, ret


def _past_sums(advantages: np.ndarray, gamma_aa: float) -> np.ndarray:
    """S(t) = sum_{k<t} gamma_aa^(t-k) A(k), via S(t) = gamma_aa * (S(t-1) + A(t-1))."""
    past = np.zeros_like(advantages)
    running = np.zeros_like(advantages[:, 0])
    for t in range(1, advantages.shape[1]):
        running = gamma_aa * (running + advantages[:, t - 1])
        past[:, t] = running
    return past


def align_advantages(advantages: np.ndarray, beta: float, gamma_aa: float) -> np.ndarray:
    """A*_i(t) = A_i(t) + beta * gamma_aa * S_i(t) * sum_{j != i} A_j(t); arrays are (E, T, A)."""
    past = _past_sums(advantages, gamma_aa)
    others = advantages.sum(axis=-1, keepdims=True) - advantages
    return advantages + beta * gamma_aa * past * others


def cooperative_bias(advantages: np.ndarray, gamma_aa: float) -> np.ndarray:
    """Per-agent mean over (env, step) of the discounted past-advantage sum."""
    return _past_sums(advantages, gamma_aa).mean(axis=(0, 1))


@dataclass
class TrainState:
    policies: dict[str, Params]
    critics: dict[str, Params]
    policy_opt: dict[str, OptimizerState]
    critic_opt: dict[str, OptimizerState]
    rng: np.random.Generator
    update: int = 0
    env_steps: int = 0


def critic_input_dim(env_config: EnvConfig, spec: AgentSpec) -> int:
    if not spec.centralized_critic:
        return obs_dim(env_config)
    if spec.shares_parameters:
        return global_dim(env_config) + env_config.num_agents
    return global_dim(env_config)


def critic_features(buffer: RolloutBuffer, spec: AgentSpec) -> np.ndarray:
    """
    (E, T, D_critic). A centralized critic sees the global block alone; when one critic serves a
    whole role it also gets the agent's one-hot so it can tell the members apart.
    """
    if not spec.centralized_critic:
        return buffer.obs[:, :, spec.index]
    if not spec.shares_parameters:
        return buffer.global_obs
    e, t, a = buffer.shape
    ident = np.zeros((e, t, a))
    ident[:, :, spec.index] = 1.0
    return np.concatenate([buffer.global_obs, ident], axis=-1)


def init_train_state(env_config: EnvConfig, train_config: TrainConfig, agents: Sequence[AgentSpec]) -> TrainState:
    rng = np.random.default_rng(train_config.seed)
    policies: dict[str, Params] = {}
    critics: dict[str, Params] = {}
    for spec in agents:
        if spec.group in policies:
            continue
        bias = train_config.company_mean_bias if spec.role == "company" else 0.0
        policies[spec.group] = init_policy(
            obs_dim(env_config), spec.action_dim, train_config.hidden_size, rng, mean_bias=bias
        )
        critics[spec.group] = init_value(critic_input_dim(env_config, spec), train_config.hidden_size, rng)
    return TrainState(
        policies=policies,
        critics=critics,
        policy_opt={g: init_optimizer(p, train_config.policy_lr) for g, p in policies.items()},
        critic_opt={g: init_optimizer(p, train_config.value_lr) for g, p in critics.items()},
        rng=rng,
    )


def make_policies(state: TrainState, agents: Sequence[AgentSpec], train_config: TrainConfig) -> list[NeuralPolicy]:
    rng_range = (train_config.log_std_min, train_config.log_std_max)
    return [NeuralPolicy(state.policies[s.group], s.head, rng_range) for s in agents]


def evaluate_values(state: TrainState, agents: Sequence[AgentSpec], buffer: RolloutBuffer) -> np.ndarray:
    e, t, a = buffer.shape
    values = np.zeros((e, t, a))
    for spec in agents:
        feats = critic_features(buffer, spec).reshape(e * t, -1)
        out, _ = mlp_forward(state.critics[spec.group], feats)
        values[:, :, spec.index] = out[:, 0].reshape(e, t)
    buffer.values = values
    return values


def _standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


def policy_loss_and_grads(
    params: Params,
    head: ActionHead,
    obs: np.ndarray,
    raw: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    *,
    clip_eps: float,
    entropy_coef: float,
    log_std_range: tuple[float, float],
) -> tuple[float, Params, dict[str, float]]:
    """
    Clipped-surrogate loss -mean(min(r A, clip(r) A)) - c * mean(entropy) and its parameter gradient.
    """
    mean, cache = mlp_forward(params, obs)
    log_std = np.broadcast_to(np.clip(params["log_std"], *log_std_range), mean.shape)
    logp = head.log_prob(mean, log_std, raw)
    ratio = np.exp(logp - old_log_probs)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    entropy = head.entropy(mean, log_std)
    b = advantages.shape[0]
    loss = float(-np.minimum(surr1, surr2).mean() - entropy_coef * entropy.mean())

    inside = (ratio >= 1.0 - clip_eps) & (ratio <= 1.0 + clip_eps)
    active = (surr1 <= surr2) | inside
    d_logp = np.where(active, -advantages * ratio, 0.0) / b
    g_mean, g_log_std = head.log_prob_grads(mean, log_std, raw)
    e_mean, e_log_std = head.entropy_grads(mean, log_std)
    d_mean = d_logp[:, None] * g_mean - (entropy_coef / b) * e_mean
    d_log_std = d_logp[:, None] * g_log_std - (entropy_coef / b) * e_log_std
    grads = policy_backward(params, cache, d_mean, d_log_std, log_std_range=log_std_range)
    stats = {
        "policy_loss": loss,
        "entropy": float(entropy.mean()),
        "approx_kl": float(np.mean(old_log_probs - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
    }
    return loss, grads, stats


def reinforce_gradient(
    params: Params,
    head: ActionHead,
    obs: np.ndarray,
    raw: np.ndarray,
    advantages: np.ndarray,
    *,
    log_std_range: tuple[float, float],
) -> Params:
    """Gradient of -mean(A * log pi(a|s)), the score-function estimator."""
    mean, cache = mlp_forward(params, obs)
    log_std = np.broadcast_to(np.clip(params["log_std"], *log_std_range), mean.shape)
    g_mean, g_log_std = head.log_prob_grads(mean, log_std, raw)
    w = -advantages / advantages.shape[0]
    return policy_backward(params, cache, w[:, None] * g_mean, w[:, None] * g_log_std, log_std_range=log_std_range)


def value_loss_and_grads(
    params: Params,
    features: np.ndarray,
    returns: np.ndarray,
    old_values: np.ndarray,
    *,
    value_clip: float,
    value_coef: float,
) -> tuple[float, Params]:
    out, cache = mlp_forward(params, features)
    v = out[:, 0]
    v_clipped = old_values + np.clip(v - old_values, -value_clip, value_clip)
    l1 = (v - returns) ** 2
    l2 = (v_clipped - returns) ** 2
    loss = float(0.5 * value_coef * np.maximum(l1, l2).mean())
    within = np.abs(v - old_values) < value_clip
    d_v = np.where(l1 >= l2, v - returns, (v_clipped - returns) * within)
    d_out = (value_coef * d_v / v.shape[0])[:, None]
    return loss, mlp_backward(params, cache, d_out)


def ppo_update(
    state: TrainState,
    agents: Sequence[AgentSpec],
    buffer: RolloutBuffer,
    config: TrainConfig,
    advantages: np.ndarray | None = None,
) -> dict[str, float]:
    """
    Epochs x minibatches over shuffled (env, step) pairs. Rows of every agent that shares a
    parameter set are pooled into one batch, so each set receives one optimizer step per minibatch.
    """
    adv_all = buffer.advantages if advantages is None else advantages
    if adv_all is None or buffer.returns is None or buffer.values is None:
        raise InputError("ppo_update needs values, advantages and returns in the buffer")
    e, t, _ = buffer.shape
    log_std_range = (config.log_std_min, config.log_std_max)
    members: dict[str, list[AgentSpec]] = defaultdict(list)
    for spec in agents:
        members[spec.group].append(spec)
    critic_feats = {spec.index: critic_features(buffer, spec) for spec in agents}
    hyper = AdamHyper()

    stats: dict[str, list[float]] = defaultdict(list)
    batch_id = 0
    for _ in range(config.resolved_epochs):
        perm = state.rng.permutation(e * t)
        for idx in np.array_split(perm, config.num_minibatches):
            if idx.size == 0:
                continue
            idx_e, idx_t = np.divmod(idx, t)
            for group, specs in members.items():
                obs = np.concatenate([buffer.obs[idx_e, idx_t, s.index] for s in specs])
                raw = np.concatenate([buffer.raw_actions[s.index][idx_e, idx_t] for s in specs])
                old_logp = np.concatenate([buffer.log_probs[idx_e, idx_t, s.index] for s in specs])
                adv = np.concatenate([adv_all[idx_e, idx_t, s.index] for s in specs])
                if config.normalize_advantages:
                    adv = _standardize(adv)
                loss, grads, p_stats = policy_loss_and_grads(
                    state.policies[group],
                    specs[0].head,
                    obs,
                    raw,
                    old_logp,
                    adv,
                    clip_eps=config.clip_eps,
                    entropy_coef=config.entropy_coef,
                    log_std_range=log_std_range,
                )
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite policy loss for {group}", batch=batch_id)
                grads, _ = clip_by_global_norm(grads, config.grad_clip)
                state.policies[group], state.policy_opt[group] = adam_step(
                    state.policies[group], grads, state.policy_opt[group], hyper, batch=batch_id
                )

                feats = np.concatenate([critic_feats[s.index][idx_e, idx_t] for s in specs])
                ret = np.concatenate([buffer.returns[idx_e, idx_t, s.index] for s in specs])
                old_v = np.concatenate([buffer.values[idx_e, idx_t, s.index] for s in specs])
                v_loss, v_grads = value_loss_and_grads(
                    state.critics[group],
                    feats,
                    ret,
                    old_v,
                    value_clip=config.value_clip,
                    value_coef=config.value_coef,
                )
                if not math.isfinite(v_loss):
                    raise TrainingError(f"non-finite value loss for {group}", batch=batch_id)
                v_grads, _ = clip_by_global_norm(v_grads, config.grad_clip)
                state.critics[group], state.critic_opt[group] = adam_step(
                    state.critics[group], v_grads, state.critic_opt[group], hyper, batch=batch_id
                )

                for k, v in p_stats.items():
                    stats[k].append(v)
                stats["value_loss"].append(v_loss)
            batch_id += 1
    return {k: float(np.mean(v)) for k, v in stats.items()}


def shape_rewards(rewards: np.ndarray, config: TrainConfig) -> np.ndarray:
    out = rewards * config.reward_scale
    if config.algorithm == "SumReward":
        out = np.broadcast_to(out.sum(axis=-1, keepdims=True), out.shape).copy()
    return out


def training_env_config(env_config: EnvConfig, train_config: TrainConfig) -> EnvConfig:
    if train_config.esg_weights is None:
        return env_config.validate()
    return env_config.with_overrides(esg_weights=train_config.esg_weights)


def _safe_gini(values: np.ndarray) -> float:
    return gini(values) if np.sum(values) > 0 else math.nan


def rollout_metrics(buffer: RolloutBuffer) -> dict[str, float]:
    finals = buffer.final_states
    g_inv = [_safe_gini(s.cumulative_investment) for s in finals]
    return {
        "market_total_wealth": float(np.mean([market_total_wealth(s) for s in finals])),
        "final_mitigation": float(np.mean([s.cumulative_mitigation for s in finals])),
        "climate_risk": float(np.mean([s.total_risk for s in finals])),
        "gini_capital": float(np.nanmean([_safe_gini(s.company_capital) for s in finals])),
        "gini_investment": float(np.nanmean(g_inv)) if np.any(np.isfinite(g_inv)) else math.nan,
        "mean_mitigation_rate": float(buffer.mitigation.mean()),
        "mean_return": float(buffer.rewards.sum(axis=1).mean()),
    }


@dataclass
class TrainResult:
    state: TrainState
    agents: list[AgentSpec]
    history: list[dict[str, Any]] = field(default_factory=list)
    env_config: EnvConfig | None = None


def _groups_for_checkpoint(state: TrainState) -> dict[str, Params]:
    out: dict[str, Params] = {}
    for g, p in state.policies.items():
        out[f"policy/{g}"] = p
        out[f"policy_m/{g}"] = state.policy_opt[g].m
        out[f"policy_v/{g}"] = state.policy_opt[g].v
    for g, p in state.critics.items():
        out[f"value/{g}"] = p
        out[f"value_m/{g}"] = state.critic_opt[g].m
        out[f"value_v/{g}"] = state.critic_opt[g].v
    return out


def save_train_state(
    path: Path,
    state: TrainState,
    env_config: EnvConfig,
    train_config: TrainConfig,
) -> None:
    meta = {
        "update": state.update,
        "env_steps": state.env_steps,
        "policy_steps": {g: o.step for g, o in state.policy_opt.items()},
        "value_steps": {g: o.step for g, o in state.critic_opt.items()},
        "rng_state": state.rng.bit_generator.state,
        "env_config": env_config.to_dict(),
        "train_config": train_config.to_dict(),
        "obs_layout_version": OBS_LAYOUT_VERSION,
    }
    save_checkpoint(path, _groups_for_checkpoint(state), meta)


def load_train_state(path: Path, train_config: TrainConfig) -> tuple[TrainState, dict[str, Any]]:
    groups, meta = load_checkpoint(path)
    if meta.get("obs_layout_version") != OBS_LAYOUT_VERSION:
        raise InputError(f"{path}: observation layout {meta.get('obs_layout_version')!r} is not supported")
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]

    def _collect(prefix: str) -> dict[str, Params]:
        return {k.split("/", 1)[1]: v for k, v in groups.items() if k.split("/", 1)[0] == prefix}

    policies, critics = _collect("policy"), _collect("value")
    pm, pv, vm, vv = _collect("policy_m"), _collect("policy_v"), _collect("value_m"), _collect("value_v")
    state = TrainState(
        policies=policies,
        critics=critics,
        policy_opt={
            g: OptimizerState(m=pm[g], v=pv[g], step=int(meta["policy_steps"][g]), lr=train_config.policy_lr)
            for g in policies
        },
        critic_opt={
            g: OptimizerState(m=vm[g], v=vv[g], step=int(meta["value_steps"][g]), lr=train_config.value_lr)
            for g in critics
        },
        rng=rng,
        update=int(meta["update"]),
        env_steps=int(meta["env_steps"]),
    )
    return state, meta


def latest_checkpoint(checkpoint_dir: Path) -> Path | None:
    if not checkpoint_dir.exists():
        return None
    found = sorted(checkpoint_dir.glob("update_*.npz"))
    return found[-1] if found else None


def train(
    env_config: EnvConfig,
    train_config: TrainConfig,
    *,
    checkpoint_dir: Path | None = None,
    resume: bool = False,
    on_update: Callable[[dict[str, Any]], None] | None = None,
    max_updates: int | None = None,
) -> TrainResult:
    """
    Run collect -> GAE -> (align) -> PPO update until `train_config.total_steps` environment steps
    (or `max_updates`) are done. Every row passed to `on_update` is also kept in the history.
    """
    env_cfg = training_env_config(env_config, train_config)
    train_config.validate(num_agents=env_cfg.num_agents)
    agents = build_agents(env_cfg, train_config)
    log.info("investor reward %s", describe_investor_reward(env_cfg))

    state: TrainState | None = None
    if resume and checkpoint_dir is not None:
        ckpt = latest_checkpoint(checkpoint_dir)
        if ckpt is not None:
            state, _ = load_train_state(ckpt, train_config)
            log.info("resumed from %s at update %d", ckpt, state.update)
    if state is None:
        state = init_train_state(env_cfg, train_config, agents)

    n_updates = train_config.updates_for(env_cfg.episode_length)
    if max_updates is not None:
        n_updates = min(n_updates, int(max_updates))
    steps_per_update = train_config.num_envs * env_cfg.episode_length
    result = TrainResult(state=state, agents=list(agents), env_config=env_cfg)

    while state.update < n_updates:
        buffer = collect_rollouts(env_cfg, make_policies(state, agents, train_config), train_config.num_envs, state.rng)
        buffer.rewards = shape_rewards(buffer.rewards, train_config)
        evaluate_values(state, agents, buffer)
        adv, _ = compute_gae(buffer, train_config.gamma, train_config.gae_lambda)
        bias = cooperative_bias(adv, train_config.aa_gamma)
        if train_config.algorithm == "AdAlign":
            buffer.aligned = align_advantages(adv, train_config.aa_beta, train_config.aa_gamma)
        loss_stats = ppo_update(state, agents, buffer, train_config, advantages=buffer.aligned)

        state.update += 1
        state.env_steps += steps_per_update
        row: dict[str, Any] = {
            "update": state.update,
            "env_steps": state.env_steps,
            "seed": train_config.seed,
            "algorithm": train_config.algorithm,
            "alpha": env_cfg.alpha,
            **rollout_metrics(buffer),
            **loss_stats,
            "coop_bias": float(bias.mean()),
            "coop_bias_company": float(bias[: env_cfg.num_companies].mean()),
            "coop_bias_investor": float(bias[env_cfg.num_companies :].mean()),
        }
        result.history.append(row)
        if on_update is not None:
            on_update(row)
        if state.update % train_config.log_every == 0 or state.update == n_updates:
            log.info(
                "update %d/%d steps=%d mtw=%.4g mitigation=%.4g risk=%.3f b=%.3g",
                state.update,
                n_updates,
                state.env_steps,
                row["market_total_wealth"],
                row["final_mitigation"],
                row["climate_risk"],
                row["coop_bias"],
            )
        if checkpoint_dir is not None and (
            state.update % train_config.checkpoint_every == 0 or state.update == n_updates
        ):
            save_train_state(checkpoint_dir / f"update_{state.update:08d}.npz", state, env_cfg, train_config)
    return result


class JointNeuralPolicy:
    """Joint policy over one environment built from trained parameters (for evaluation runs)."""

    def __init__(
        self,
        env_config: EnvConfig,
        state: TrainState,
        agents: Sequence[AgentSpec],
        train_config: TrainConfig,
        rng: np.random.Generator,
    ) -> None:
        self.config = env_config
        self.policies = make_policies(state, agents, train_config)
        self.rng = rng

    def __call__(self, obs: np.ndarray, env_state: EnvState) -> JointAction:
        m = self.config.num_companies
        acts = [p.act(obs[k][None, :], self.rng)[2][0] for k, p in enumerate(self.policies)]
        return JointAction(
            mitigation=np.array([float(a[0]) for a in acts[:m]]),
            portfolio=np.stack(acts[m:]).astype(np.int8),
        )


def evaluate(
    env_config: EnvConfig,
    state: TrainState,
    agents: Sequence[AgentSpec],
    train_config: TrainConfig,
    *,
    episodes: int,
    seed: int,
) -> list[Episode]:
    """Sample `episodes` evaluation episodes from the current policies; seeds derive from `seed`."""
    if episodes < 1:
        raise InputError("episodes must be >= 1")
    seq = np.random.SeedSequence(seed)
    policy_seq, env_seq = seq.spawn(2)
    policy = JointNeuralPolicy(env_config, state, agents, train_config, np.random.default_rng(policy_seq))
    env_seeds = env_seq.generate_state(episodes, dtype=np.uint64)
    return [run_episode(env_config, policy, int(s)) for s in env_seeds]


def load_policy_checkpoint(path: Path) -> tuple[EnvConfig, TrainConfig, TrainState, list[AgentSpec]]:
    """Rebuild configs, parameters and agent wiring from a training checkpoint."""
    _, meta = load_checkpoint(path)
    env_cfg = EnvConfig.from_dict(meta["env_config"])
    train_cfg = TrainConfig.from_dict(meta["train_config"])
    state, _ = load_train_state(path, train_cfg)
    return env_cfg, train_cfg, state, build_agents(env_cfg, train_cfg)
