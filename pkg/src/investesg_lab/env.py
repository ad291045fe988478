from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .config import EnvConfig
from .errors import ActionError, InputError
from .util import ensure_parent_dir

log = logging.getLogger(__name__)

# Bump when the observation layout below changes; checkpoints record it.
OBS_LAYOUT_VERSION = 1

INVESTOR_REWARD_FORMULAS = {
    "wealth": "r_j = delta(cash_j + sum_i H_ij)",
    "wealth_plus_esg": (
        "r_j = delta(cash_j + sum_i H_ij) + w_j * sum_i (H_ij / K_i) * cum_mitigation_i / initial_total_capital"
    ),
}


def describe_investor_reward(config: EnvConfig) -> str:
    return f"{config.investor_reward}: {INVESTOR_REWARD_FORMULAS[config.investor_reward]}"


@dataclass(frozen=True)
class EnvState:
    t: int
    company_capital: np.ndarray
    investor_cash: np.ndarray
    # (num_investors, num_companies): currency value of investor j's stake in company i
    holdings: np.ndarray
    cumulative_mitigation: float
    event_probs: np.ndarray
    total_risk: float
    cumulative_company_mitigation: np.ndarray
    cumulative_investment: np.ndarray


@dataclass(frozen=True)
class JointAction:
    mitigation: np.ndarray
    portfolio: np.ndarray

    def validate(self, config: EnvConfig) -> None:
        m, n = config.num_companies, config.num_investors
        u = np.asarray(self.mitigation, dtype=np.float64)
        a = np.asarray(self.portfolio)
        if u.shape != (m,):
            raise ActionError(f"mitigation must have shape ({m},), got {u.shape}")
        if a.shape != (n, m):
            raise ActionError(f"portfolio must have shape ({n}, {m}), got {a.shape}")
        if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > config.max_mitigation):
            raise ActionError(f"mitigation must lie in [0, {config.max_mitigation}], got {u.tolist()}")
        if not np.all((a == 0) | (a == 1)):
            raise ActionError(f"portfolio entries must be 0 or 1, got {a.tolist()}")


@dataclass(frozen=True)
class StepOutcome:
    rewards: np.ndarray
    events: np.ndarray
    num_events: int
    observations: np.ndarray
    done: bool
    interim_capital: np.ndarray
    invested: np.ndarray
    cash_after_reinvestment: np.ndarray


def agent_names(config: EnvConfig) -> list[str]:
    return [f"company_{i}" for i in range(config.num_companies)] + [
        f"investor_{j}" for j in range(config.num_investors)
    ]


def global_dim(config: EnvConfig) -> int:
    m, n = config.num_companies, config.num_investors
    return 2 * m + n + n * m + 5


def obs_dim(config: EnvConfig) -> int:
    return global_dim(config) + config.num_agents


def _scale(config: EnvConfig) -> float:
    s = config.initial_total_capital
    return s if s > 0 else 1.0


def initial_state(config: EnvConfig) -> EnvState:
    config.validate()
    m, n = config.num_companies, config.num_investors
    probs, total = climate_event_probs(0, 0.0, config)
    return EnvState(
        t=0,
        company_capital=config.company_capital_vector,
        investor_cash=config.investor_cash_vector,
        holdings=np.zeros((n, m)),
        cumulative_mitigation=0.0,
        event_probs=probs,
        total_risk=total,
        cumulative_company_mitigation=np.zeros(m),
        cumulative_investment=np.zeros(m),
    )


@dataclass(frozen=True)
class EnvBatch:
    """EnvState for E environments advanced in lock-step; every array gains a leading env axis."""

    t: int
    company_capital: np.ndarray  # (E, M)
    investor_cash: np.ndarray  # (E, N)
    holdings: np.ndarray  # (E, N, M)
    cumulative_mitigation: np.ndarray  # (E,)
    event_probs: np.ndarray  # (E, 3)
    total_risk: np.ndarray  # (E,)
    cumulative_company_mitigation: np.ndarray  # (E, M)
    cumulative_investment: np.ndarray  # (E, M)

    @classmethod
    def stack(cls, states: Sequence[EnvState]) -> EnvBatch:
        if not states:
            raise InputError("cannot stack an empty list of states")
        steps = {s.t for s in states}
        if len(steps) != 1:
            raise InputError(f"states must share one time step, got {sorted(steps)}")
        return cls(
            t=states[0].t,
            company_capital=np.stack([s.company_capital for s in states]),
            investor_cash=np.stack([s.investor_cash for s in states]),
            holdings=np.stack([s.holdings for s in states]),
            cumulative_mitigation=np.array([s.cumulative_mitigation for s in states], dtype=np.float64),
            event_probs=np.stack([s.event_probs for s in states]),
            total_risk=np.array([s.total_risk for s in states], dtype=np.float64),
            cumulative_company_mitigation=np.stack([s.cumulative_company_mitigation for s in states]),
            cumulative_investment=np.stack([s.cumulative_investment for s in states]),
        )

    @property
    def size(self) -> int:
        return int(self.company_capital.shape[0])

    def state(self, e: int) -> EnvState:
        return EnvState(
            t=self.t,
            company_capital=self.company_capital[e],
            investor_cash=self.investor_cash[e],
            holdings=self.holdings[e],
            cumulative_mitigation=float(self.cumulative_mitigation[e]),
            event_probs=self.event_probs[e],
            total_risk=float(self.total_risk[e]),
            cumulative_company_mitigation=self.cumulative_company_mitigation[e],
            cumulative_investment=self.cumulative_investment[e],
        )

    def states(self) -> list[EnvState]:
        return [self.state(e) for e in range(self.size)]


@dataclass(frozen=True)
class BatchOutcome:
    rewards: np.ndarray  # (E, A)
    events: np.ndarray  # (E, 3)
    num_events: np.ndarray  # (E,)
    observations: np.ndarray  # (E, A, D)
    done: bool
    interim_capital: np.ndarray  # (E, M)
    invested: np.ndarray  # (E, N, M)
    cash_after_reinvestment: np.ndarray  # (E, N)

    def outcome(self, e: int) -> StepOutcome:
        return StepOutcome(
            rewards=self.rewards[e],
            events=self.events[e],
            num_events=int(self.num_events[e]),
            observations=self.observations[e],
            done=self.done,
            interim_capital=self.interim_capital[e],
            invested=self.invested[e],
            cash_after_reinvestment=self.cash_after_reinvestment[e],
        )


def _reallocate(
    state: EnvState | EnvBatch, portfolio: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Liquidate holdings to cash, then split each investor's capital evenly over its chosen companies."""
    a = np.asarray(portfolio, dtype=np.float64)
    investor_capital = state.investor_cash + state.holdings.sum(axis=-1)
    width = a.sum(axis=-1)
    per_company = np.divide(investor_capital, width, out=np.zeros_like(investor_capital), where=width > 0)
    invested = a * per_company[..., None]
    cash_after = investor_capital - invested.sum(axis=-1)
    interim = state.company_capital - state.holdings.sum(axis=-2) + invested.sum(axis=-2)
    return np.maximum(interim, 0.0), invested, np.maximum(cash_after, 0.0)


def compute_interim_capital(state: EnvState | EnvBatch, portfolio: np.ndarray) -> np.ndarray:
    return _reallocate(state, portfolio)[0]


def climate_event_probs(
    t: int, cumulative_mitigation: float | np.ndarray, config: EnvConfig
) -> tuple[np.ndarray, float | np.ndarray]:
    """Scalar U gives (3,) probabilities and a float total; U of shape (E,) gives (E, 3) and (E,)."""
    u = np.asarray(cumulative_mitigation, dtype=np.float64)
    probs = config.mu * t / (1.0 + config.effectiveness * u[..., None]) + config.p0
    probs = np.clip(probs, 0.0, 1.0)
    total = 1.0 - np.prod(1.0 - probs, axis=-1)
    return probs, (float(total) if u.ndim == 0 else total)


def sample_events(event_probs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    indicators = rng.random(len(event_probs)) < np.asarray(event_probs)
    return indicators, int(indicators.sum())


def sample_events_batch(
    event_probs: np.ndarray, rngs: Sequence[np.random.Generator]
) -> tuple[np.ndarray, np.ndarray]:
    """Row e draws from rngs[e] exactly as sample_events would."""
    probs = np.asarray(event_probs)
    if len(rngs) != probs.shape[0]:
        raise InputError(f"expected {probs.shape[0]} generators, got {len(rngs)}")
    draws = np.stack([g.random(probs.shape[-1]) for g in rngs])
    indicators = draws < probs
    return indicators, indicators.sum(axis=-1)


def validate_actions(config: EnvConfig, mitigation: np.ndarray, portfolio: np.ndarray) -> None:
    """Batched JointAction.validate; the error names the first offending environment."""
    m, n = config.num_companies, config.num_investors
    u = np.asarray(mitigation, dtype=np.float64)
    a = np.asarray(portfolio)
    if u.ndim != 2 or u.shape[1] != m:
        raise ActionError(f"mitigation must have shape (E, {m}), got {u.shape}")
    if a.shape != (u.shape[0], n, m):
        raise ActionError(f"portfolio must have shape ({u.shape[0]}, {n}, {m}), got {a.shape}")
    with np.errstate(invalid="ignore"):
        bad_u = ~np.all(np.isfinite(u) & (u >= 0.0) & (u <= config.max_mitigation), axis=1)
    if bad_u.any():
        e = int(np.argmax(bad_u))
        raise ActionError(f"mitigation must lie in [0, {config.max_mitigation}], got {u[e].tolist()}", env_index=e)
    bad_a = ~np.all((a == 0) | (a == 1), axis=(1, 2))
    if bad_a.any():
        e = int(np.argmax(bad_a))
        raise ActionError(f"portfolio entries must be 0 or 1, got {a[e].tolist()}", env_index=e)


def step_batch(
    config: EnvConfig,
    batch: EnvBatch,
    mitigation: np.ndarray,
    portfolio: np.ndarray,
    rngs: Sequence[np.random.Generator],
) -> tuple[EnvBatch, BatchOutcome]:
    """Advance every environment one step; env e samples its events from rngs[e]."""
    validate_actions(config, mitigation, portfolio)
    u = np.asarray(mitigation, dtype=np.float64)

    interim, invested, cash_after = _reallocate(batch, portfolio)

    spend = u * interim
    cum_mitigation = batch.cumulative_mitigation + spend.sum(axis=-1)

    probs, total = climate_event_probs(batch.t, cum_mitigation, config)
    events, x = sample_events_batch(probs, rngs)

    loss_factor = np.maximum(0.0, 1.0 - x[:, None] * config.loss_vector)
    growth = (1.0 - u) * (1.0 + config.market_growth) * loss_factor
    capital = np.maximum(growth * interim, 0.0)
    company_rewards = capital - interim

    holdings = invested * growth[:, None, :]
    company_cum = batch.cumulative_company_mitigation + spend

    wealth_before = batch.investor_cash + batch.holdings.sum(axis=-1)
    wealth_after = cash_after + holdings.sum(axis=-1)
    investor_rewards = wealth_after - wealth_before
    if config.investor_reward == "wealth_plus_esg":
        cap = capital[:, None, :]
        share = np.divide(holdings, cap, out=np.zeros_like(holdings), where=cap > 0)
        esg_score = (share * company_cum[:, None, :]).sum(axis=-1) / _scale(config)
        investor_rewards = investor_rewards + config.esg_vector * esg_score

    new_batch = EnvBatch(
        t=batch.t + 1,
        company_capital=capital,
        investor_cash=cash_after,
        holdings=holdings,
        cumulative_mitigation=cum_mitigation,
        event_probs=probs,
        total_risk=total,
        cumulative_company_mitigation=company_cum,
        cumulative_investment=batch.cumulative_investment + invested.sum(axis=-2),
    )
    outcome = BatchOutcome(
        rewards=np.concatenate([company_rewards, investor_rewards], axis=1),
        events=events,
        num_events=x,
        observations=observe_batch(config, new_batch),
        done=new_batch.t >= config.episode_length,
        interim_capital=interim,
        invested=invested,
        cash_after_reinvestment=cash_after,
    )
    return new_batch, outcome


def step(
    config: EnvConfig,
    state: EnvState,
    action: JointAction,
    rng: np.random.Generator,
) -> tuple[EnvState, StepOutcome]:
    action.validate(config)
    new_batch, outcome = step_batch(
        config,
        EnvBatch.stack([state]),
        np.asarray(action.mitigation, dtype=np.float64)[None],
        np.asarray(action.portfolio)[None],
        [rng],
    )
    return new_batch.state(0), outcome.outcome(0)


def global_features_batch(config: EnvConfig, batch: EnvBatch) -> np.ndarray:
    """
    Layout v1, every currency amount divided by the initial total capital:
      company capital (M) | investor cash (N) | holdings, investor-major (N*M) | U |
      event probabilities (3) | t/T | per-company cumulative mitigation (M)
    """
    s = _scale(config)
    e = batch.size
    return np.concatenate(
        [
            batch.company_capital / s,
            batch.investor_cash / s,
            batch.holdings.reshape(e, -1) / s,
            batch.cumulative_mitigation[:, None] / s,
            batch.event_probs,
            np.full((e, 1), batch.t / config.episode_length),
            batch.cumulative_company_mitigation / s,
        ],
        axis=1,
    )


def global_features(config: EnvConfig, state: EnvState) -> np.ndarray:
    return global_features_batch(config, EnvBatch.stack([state]))[0]


def observe_batch(config: EnvConfig, batch: EnvBatch) -> np.ndarray:
    """(E, A, D): per env, one row per agent (companies first), the global block then a one-hot identity."""
    g = global_features_batch(config, batch)
    a, e = config.num_agents, batch.size
    ident = np.broadcast_to(np.eye(a), (e, a, a))
    return np.concatenate([np.broadcast_to(g[:, None, :], (e, a, g.shape[1])), ident], axis=2)


def observe(config: EnvConfig, state: EnvState) -> np.ndarray:
    return observe_batch(config, EnvBatch.stack([state]))[0]


def market_flow_balance(before: EnvState, outcome: StepOutcome) -> tuple[float, float]:
    """(money before reallocation, money after reallocation) for one step; equal up to rounding."""
    lhs = float(before.company_capital.sum() + before.investor_cash.sum())
    rhs = float(outcome.interim_capital.sum() + outcome.cash_after_reinvestment.sum())
    return lhs, rhs


class InvestESGEnv:
    """A single environment instance; owns its RNG and is not shared across threads."""

    def __init__(self, config: EnvConfig) -> None:
        self.config = config.validate()
        self.state: EnvState = initial_state(self.config)
        self.rng = np.random.default_rng()
        log.debug("investor reward %s", describe_investor_reward(self.config))

    def reset(self, seed: int | np.random.SeedSequence | None = None) -> np.ndarray:
        self.config.validate()
        self.rng = np.random.default_rng(seed)
        self.state = initial_state(self.config)
        return self.observe()

    def step(self, action: JointAction) -> StepOutcome:
        self.state, outcome = step(self.config, self.state, action, self.rng)
        return outcome

    def observe(self) -> np.ndarray:
        return observe(self.config, self.state)



class VecInvestESGEnv:
    """E environments stepped together; env e keeps its own RNG, so it replays InvestESGEnv for the same seed."""

    def __init__(self, config: EnvConfig, num_envs: int) -> None:
        if num_envs < 1:
            raise InputError("num_envs must be >= 1")
        self.config = config.validate()
        self.num_envs = num_envs
        self.batch = EnvBatch.stack([initial_state(self.config)] * num_envs)
        self.rngs = [np.random.default_rng() for _ in range(num_envs)]
        log.debug("investor reward %s", describe_investor_reward(self.config))

    def reset(self, seeds: Sequence[int | np.random.SeedSequence | None]) -> np.ndarray:
        if len(seeds) != self.num_envs:
            raise InputError(f"expected {self.num_envs} seeds, got {len(seeds)}")
        self.config.validate()
        self.rngs = [np.random.default_rng(s) for s in seeds]
        self.batch = EnvBatch.stack([initial_state(self.config)] * self.num_envs)
        return self.observe()

    def step(self, mitigation: np.ndarray, portfolio: np.ndarray) -> BatchOutcome:
        self.batch, outcome = step_batch(self.config, self.batch, mitigation, portfolio, self.rngs)
        return outcome

    def observe(self) -> np.ndarray:
        return observe_batch(self.config, self.batch)

    def global_features(self) -> np.ndarray:
        return global_features_batch(self.config, self.batch)

    def states(self) -> list[EnvState]:
        return self.batch.states()


PolicyFn = Callable[[np.ndarray, EnvState], JointAction]


@dataclass
class Episode:
    seed: int | None
    final_state: EnvState
    rewards: np.ndarray  # (T, A)
    mitigation: np.ndarray  # (T, M)
    portfolio: np.ndarray  # (T, N, M)
    company_capital: np.ndarray  # (T + 1, M)
    investor_wealth: np.ndarray  # (T + 1, N)
    cumulative_mitigation: np.ndarray  # (T + 1,)
    total_risk: np.ndarray  # (T + 1,)
    num_events: np.ndarray  # (T,)

    @property
    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=0)

    @property
    def length(self) -> int:
        return int(self.rewards.shape[0])


def fixed_policy(config: EnvConfig, mitigation: float | np.ndarray, portfolio: np.ndarray | None = None) -> PolicyFn:
    """Constant joint action; investors default to an equal-weight (all ones) portfolio."""
    u = np.broadcast_to(np.asarray(mitigation, dtype=np.float64), (config.num_companies,)).copy()
    a = (
        np.ones((config.num_investors, config.num_companies), dtype=np.int8)
        if portfolio is None
        else np.asarray(portfolio, dtype=np.int8)
    )
    action = JointAction(mitigation=u, portfolio=a)

    def _policy(obs: np.ndarray, state: EnvState) -> JointAction:
        return action

    return _policy


def run_episode(config: EnvConfig, policy: PolicyFn, seed: int | None) -> Episode:
    env = InvestESGEnv(config)
    obs = env.reset(seed)
    t_len, m, n = config.episode_length, config.num_companies, config.num_investors
    rewards = np.zeros((t_len, config.num_agents))
    mitigation = np.zeros((t_len, m))
    portfolio = np.zeros((t_len, n, m), dtype=np.int8)
    capital = np.zeros((t_len + 1, m))
    wealth = np.zeros((t_len + 1, n))
    cum = np.zeros(t_len + 1)
    risk = np.zeros(t_len + 1)
    num_events = np.zeros(t_len, dtype=np.int64)

    def _record(k: int) -> None:
        s = env.state
        capital[k] = s.company_capital
        wealth[k] = s.investor_cash + s.holdings.sum(axis=1)
        cum[k] = s.cumulative_mitigation
        risk[k] = s.total_risk

    _record(0)
    for t in range(t_len):
        action = policy(obs, env.state)
        outcome = env.step(action)
        rewards[t] = outcome.rewards
        mitigation[t] = action.mitigation
        portfolio[t] = action.portfolio
        num_events[t] = outcome.num_events
        _record(t + 1)
        obs = outcome.observations
        if outcome.done:
            break

    return Episode(
        seed=seed,
        final_state=env.state,
        rewards=rewards,
        mitigation=mitigation,
        portfolio=portfolio,
        company_capital=capital,
        investor_wealth=wealth,
        cumulative_mitigation=cum,
        total_risk=risk,
        num_events=num_events,
    )


def trajectory_frame(episode: Episode, config: EnvConfig) -> pd.DataFrame:
    """One row per (step, agent)."""
    names = agent_names(config)
    m = config.num_companies
    rows: list[dict[str, object]] = []
    for t in range(episode.length):
        for k, name in enumerate(names):
            if k < m:
                role, action, value = "company", f"{episode.mitigation[t, k]:.10g}", episode.company_capital[t + 1, k]
            else:
                j = k - m
                role = "investor"
                action = "".join(str(int(v)) for v in episode.portfolio[t, j])
                value = episode.investor_wealth[t + 1, j]
            rows.append(
                {
                    "step": t,
                    "agent": name,
                    "role": role,
                    "action": action,
                    "reward": float(episode.rewards[t, k]),
                    "capital": float(value),
                    "cumulative_mitigation": float(episode.cumulative_mitigation[t + 1]),
                    "total_risk": float(episode.total_risk[t + 1]),
                    "num_events": int(episode.num_events[t]),
                    "seed": episode.seed,
                }
            )
    return pd.DataFrame(rows)


def write_trajectory_csv(path: Path, episode: Episode, config: EnvConfig) -> None:
    ensure_parent_dir(path)
    trajectory_frame(episode, config).to_csv(path, index=False)


def with_state(state: EnvState, **kw: object) -> EnvState:
    return replace(state, **kw)
