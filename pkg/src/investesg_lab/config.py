from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError
from .util import config_hash

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EVENT_NAMES = ("heat", "precipitation", "drought")
INVESTOR_REWARDS = ("wealth", "wealth_plus_esg")
ALGORITHMS = ("IPPO", "MAPPO", "SumReward", "AdAlign")
INVESTOR_HEADS = ("gaussian", "bernoulli")
EXPECTATIONS = ("exact", "bernoulli")

PerAgent = float | tuple[float, ...]


def _broadcast(value: PerAgent, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(name, f"expected a scalar or a list of length {n}, got length {arr.size}")
    return arr.copy()


def _per_agent(value: Any, name: str) -> PerAgent:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(name, f"expected a number or a list of numbers, got {value!r}")


def _check_keys(section: str, data: Mapping[str, Any], allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _check_schema(doc: Mapping[str, Any], source: str) -> None:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"{source}: expected {SCHEMA_VERSION}, got {version!r}")


@dataclass(frozen=True)
class EventParams:
    name: str
    mu: float
    lambda_tilde: float
    p0: float


def _default_events() -> tuple[EventParams, ...]:
    return (
        EventParams("heat", 0.0083, 0.0012, 0.2),
        EventParams("precipitation", 0.0038, 0.0010, 0.2),
        EventParams("drought", 0.0011, 0.0008, 0.1875),
    )


@dataclass(frozen=True)
class EnvConfig:
    """
    Parameters of the climate-investment game.

    Per-agent fields accept a scalar (broadcast to every company/investor) or a tuple with one entry
    per agent; use the *_vector properties to read them as arrays.
    """

    num_companies: int = 5
    num_investors: int = 3
    episode_length: int = 100
    alpha: float = 1.0
    events: tuple[EventParams, ...] = field(default_factory=_default_events)
    loss_coefficients: PerAgent = 0.05
    market_growth: float = 0.05
    max_mitigation: float = 1.0
    initial_company_capital: PerAgent = 6.0
    initial_investor_cash: PerAgent = 6.0
    esg_weights: PerAgent = 0.0
    investor_reward: str = "wealth_plus_esg"

    @property
    def num_agents(self) -> int:
        return self.num_companies + self.num_investors

    @property
    def mu(self) -> np.ndarray:
        return np.array([e.mu for e in self.events], dtype=np.float64)

    @property
    def lambda_tilde(self) -> np.ndarray:
        return np.array([e.lambda_tilde for e in self.events], dtype=np.float64)

    @property
    def effectiveness(self) -> np.ndarray:
        return self.alpha * self.lambda_tilde

    @property
    def p0(self) -> np.ndarray:
        return np.array([e.p0 for e in self.events], dtype=np.float64)

    @property
    def loss_vector(self) -> np.ndarray:
        return _broadcast(self.loss_coefficients, self.num_companies, "env.loss_coefficients")

    @property
    def company_capital_vector(self) -> np.ndarray:
        return _broadcast(self.initial_company_capital, self.num_companies, "env.initial_company_capital")

    @property
    def investor_cash_vector(self) -> np.ndarray:
        return _broadcast(self.initial_investor_cash, self.num_investors, "env.initial_investor_cash")

    @property
    def esg_vector(self) -> np.ndarray:
        return _broadcast(self.esg_weights, self.num_investors, "env.esg_weights")

    @property
    def initial_total_capital(self) -> float:
        return float(self.company_capital_vector.sum() + self.investor_cash_vector.sum())

    def validate(self) -> EnvConfig:
        if self.num_companies < 1:
            raise ConfigError("env.num_companies", "must be >= 1")
        if self.num_investors < 1:
            raise ConfigError("env.num_investors", "must be >= 1")
        if self.episode_length < 1:
            raise ConfigError("env.episode_length", "must be >= 1")
        if not self.alpha >= 0:
            raise ConfigError("env.alpha", "must be >= 0")
        if len(self.events) != len(EVENT_NAMES):
            raise ConfigError("env.events", f"expected events {', '.join(EVENT_NAMES)}")
        for e in self.events:
            if not 0.0 <= e.p0 <= 1.0:
                raise ConfigError(f"env.events.{e.name}.p0", f"must be in [0, 1], got {e.p0}")
            if not e.mu >= 0:
                raise ConfigError(f"env.events.{e.name}.mu", "must be >= 0")
            if not e.lambda_tilde >= 0:
                raise ConfigError(f"env.events.{e.name}.lambda_tilde", "must be >= 0")
        loss = self.loss_vector
        if np.any(loss < 0) or np.any(loss > 1):
            raise ConfigError("env.loss_coefficients", "must be in [0, 1]")
        if not self.market_growth >= 0:
            raise ConfigError("env.market_growth", "must be >= 0")
        if not 0.0 < self.max_mitigation <= 1.0:
            raise ConfigError("env.max_mitigation", "must be in (0, 1]")
        if np.any(self.company_capital_vector < 0):
            raise ConfigError("env.initial_company_capital", "must be >= 0")
        if np.any(self.investor_cash_vector < 0):
            raise ConfigError("env.initial_investor_cash", "must be >= 0")
        if np.any(self.esg_vector < 0):
            raise ConfigError("env.esg_weights", "must be >= 0")
        if self.investor_reward not in INVESTOR_REWARDS:
            raise ConfigError("env.investor_reward", f"must be one of: {', '.join(INVESTOR_REWARDS)}")
        return self

    def with_overrides(self, **kw: Any) -> EnvConfig:
        return replace(self, **kw).validate()

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["events"] = {e.name: {"mu": e.mu, "lambda_tilde": e.lambda_tilde, "p0": e.p0} for e in self.events}
        for key in ("loss_coefficients", "initial_company_capital", "initial_investor_cash", "esg_weights"):
            if isinstance(out[key], tuple):
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EnvConfig:
        allowed = {f.name for f in fields(cls)}
        _check_keys("env", data, allowed)
        kw: dict[str, Any] = {}
        for key, value in data.items():
            if key == "events":
                kw["events"] = _parse_events(value)
            elif key in ("loss_coefficients", "initial_company_capital", "initial_investor_cash", "esg_weights"):
                kw[key] = _per_agent(value, f"env.{key}")
            elif key in ("num_companies", "num_investors", "episode_length"):
                kw[key] = int(value)
            elif key == "investor_reward":
                kw[key] = str(value)
            else:
                kw[key] = float(value)
        return cls(**kw).validate()

    def hash(self) -> str:
        return config_hash(self.to_dict())


def _parse_events(value: Any) -> tuple[EventParams, ...]:
    if not isinstance(value, Mapping):
        raise ConfigError("env.events", "expected an object keyed by event name")
    _check_keys("env.events", value, set(EVENT_NAMES))
    defaults = {e.name: e for e in _default_events()}
    out: list[EventParams] = []
    for name in EVENT_NAMES:
        spec = value.get(name, {})
        _check_keys(f"env.events.{name}", spec, {"mu", "lambda_tilde", "p0"})
        base = defaults[name]
        out.append(
            EventParams(
                name=name,
                mu=float(spec.get("mu", base.mu)),
                lambda_tilde=float(spec.get("lambda_tilde", base.lambda_tilde)),
                p0=float(spec.get("p0", base.p0)),
            )
        )
    return tuple(out)


@dataclass(frozen=True)
class TrainConfig:
    """
    PPO-family training hyperparameters.

    `epochs` and `self_play` default to None and resolve per algorithm (4 epochs / no self-play for
    the PPO baselines, 1 epoch / self-play for AdAlign); `centralized_critic` resolves to True only
    for MAPPO.
    """

    algorithm: str = "IPPO"
    self_play: bool | None = None
    centralized_critic: bool | None = None
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.05
    value_coef: float = 0.5
    value_clip: float = 10.0
    epochs: int | None = None
    num_minibatches: int = 20
    grad_clip: float = 10.0
    policy_lr: float = 1e-4
    value_lr: float = 1e-4
    aa_beta: float = 0.2
    aa_gamma: float = 0.9
    esg_weights: PerAgent | None = None
    num_envs: int = 64
    total_steps: int = 70_000_000
    hidden_size: int = 64
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    company_mean_bias: float = -3.0
    investor_head: str = "gaussian"
    normalize_advantages: bool = True
    reward_scale: float = 1.0
    checkpoint_every: int = 50
    log_every: int = 10
    seed: int = 0

    @property
    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return int(self.epochs)
        return 1 if self.algorithm == "AdAlign" else 4

    @property
    def resolved_self_play(self) -> bool:
        if self.self_play is not None:
            return bool(self.self_play)
        return self.algorithm == "AdAlign"

    @property
    def resolved_centralized_critic(self) -> bool:
        if self.centralized_critic is not None:
            return bool(self.centralized_critic)
        return self.algorithm == "MAPPO"

    def updates_for(self, episode_length: int) -> int:
        per_update = self.num_envs * episode_length
        return max(1, int(self.total_steps) // per_update)

    def validate(self, *, num_agents: int | None = None) -> TrainConfig:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("train.algorithm", f"must be one of: {', '.join(ALGORITHMS)}")
        if self.algorithm == "IPPO" and self.centralized_critic:
            raise ConfigError("train.centralized_critic", "IPPO uses decentralized critics; use MAPPO instead")
        if self.algorithm == "MAPPO" and self.centralized_critic is False:
            raise ConfigError("train.centralized_critic", "MAPPO requires a centralized critic")
        if self.algorithm == "AdAlign" and num_agents is not None and num_agents < 2:
            raise ConfigError("train.algorithm", "AdAlign needs at least two agents to align advantages")
        if self.aa_beta < 0:
            raise ConfigError("train.aa_beta", "must be >= 0")
        if not 0.0 <= self.aa_gamma <= 1.0:
            raise ConfigError("train.aa_gamma", "must be in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("train.gamma", "must be in [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("train.gae_lambda", "must be in [0, 1]")
        for name in ("num_envs", "total_steps", "hidden_size", "num_minibatches", "checkpoint_every", "log_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"train.{name}", "must be >= 1")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("train.epochs", "must be >= 1")
        for name in ("clip_eps", "value_clip", "grad_clip", "policy_lr", "value_lr", "reward_scale"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"train.{name}", "must be > 0")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ConfigError("train.entropy_coef", "coefficients must be >= 0")
        if self.log_std_min >= self.log_std_max:
            raise ConfigError("train.log_std_min", "must be < log_std_max")
        if self.investor_head not in INVESTOR_HEADS:
            raise ConfigError("train.investor_head", f"must be one of: {', '.join(INVESTOR_HEADS)}")
        return self

    def with_overrides(self, **kw: Any) -> TrainConfig:
        return replace(self, **kw).validate()

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        if isinstance(out["esg_weights"], tuple):
            out["esg_weights"] = list(out["esg_weights"])
        out["resolved"] = {
            "epochs": self.resolved_epochs,
            "self_play": self.resolved_self_play,
            "centralized_critic": self.resolved_centralized_critic,
        }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TrainConfig:
        # "resolved" is derived output written by to_dict
        data = {k: v for k, v in data.items() if k != "resolved"}
        _check_keys("train", data, {f.name for f in fields(cls)})
        kw: dict[str, Any] = {}
        for key, value in data.items():
            if value is None:
                kw[key] = None
            elif key == "esg_weights":
                kw[key] = _per_agent(value, "train.esg_weights")
            elif key in ("algorithm", "investor_head"):
                kw[key] = str(value)
            elif key in ("self_play", "centralized_critic", "normalize_advantages"):
                kw[key] = bool(value)
            elif key in ("epochs", "num_minibatches", "num_envs", "total_steps", "hidden_size",
                         "checkpoint_every", "log_every", "seed"):
                kw[key] = int(value)
            else:
                kw[key] = float(value)
        return cls(**kw).validate()

    def hash(self) -> str:
        return config_hash(self.to_dict())


@dataclass(frozen=True)
class AnalysisConfig:
    steps: tuple[int, ...] = (10, 50, 99)
    max_lag: int = 100
    expectation: str = "exact"
    scale_min: float = 1e-3
    scale_max: float = 1e3
    scale_points: int = 25
    bisect_rtol: float = 1e-8
    bisect_maxiter: int = 200
    bracket_limit: float = 1e12

    def scale_grid(self) -> np.ndarray:
        return np.geomspace(self.scale_min, self.scale_max, int(self.scale_points))

    def validate(self) -> AnalysisConfig:
        if not self.steps or any(int(s) < 1 for s in self.steps):
            raise ConfigError("analysis.steps", "must be a non-empty list of steps >= 1")
        if self.max_lag < 1:
            raise ConfigError("analysis.max_lag", "must be >= 1")
        if self.expectation not in EXPECTATIONS:
            raise ConfigError("analysis.expectation", f"must be one of: {', '.join(EXPECTATIONS)}")
        if not 0 < self.scale_min < self.scale_max:
            raise ConfigError("analysis.scale_min", "need 0 < scale_min < scale_max")
        if self.scale_points < 2:
            raise ConfigError("analysis.scale_points", "must be >= 2")
        if not 0 < self.bisect_rtol < 1:
            raise ConfigError("analysis.bisect_rtol", "must be in (0, 1)")
        if self.bisect_maxiter < 1:
            raise ConfigError("analysis.bisect_maxiter", "must be >= 1")
        return self

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["steps"] = list(self.steps)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AnalysisConfig:
        allowed = {f.name for f in fields(cls)}
        _check_keys("analysis", data, allowed)
        kw: dict[str, Any] = {}
        for key, value in data.items():
            if key == "steps":
                kw[key] = tuple(int(v) for v in value)
            elif key == "expectation":
                kw[key] = str(value)
            elif key in ("max_lag", "scale_points", "bisect_maxiter"):
                kw[key] = int(value)
            else:
                kw[key] = float(value)
        return cls(**kw).validate()


@dataclass(frozen=True)
class ConfigBundle:
    env: EnvConfig
    train: TrainConfig
    analysis: AnalysisConfig

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "env": self.env.to_dict(),
            "train": self.train.to_dict(),
            "analysis": self.analysis.to_dict(),
        }


def _read_json(path: Path) -> dict[str, Any]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError("path", f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("path", f"{path}: invalid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise ConfigError("path", f"{path}: expected a JSON object")
    return doc


def _packaged(name: str) -> dict[str, Any]:
    return json.loads(resources.files("investesg_lab").joinpath(name).read_text(encoding="utf-8"))


def load_env_document(path: Path | None = None) -> tuple[EnvConfig, AnalysisConfig]:
    doc = _read_json(path) if path is not None else _packaged("default_env.json")
    source = str(path) if path is not None else "default_env.json"
    _check_schema(doc, source)
    _check_keys("<root>", doc, {"schema_version", "env", "analysis"})
    env = EnvConfig.from_dict(doc.get("env", {}))
    analysis = AnalysisConfig.from_dict(doc.get("analysis", {}))
    return env, analysis


def load_env_config(path: Path | None = None) -> EnvConfig:
    return load_env_document(path)[0]


def default_env_config() -> EnvConfig:
    return load_env_config(None)


def load_train_config(
    path: Path | None = None,
    *,
    desk_scale: bool = False,
    overrides: Mapping[str, Any] | None = None,
) -> TrainConfig:
    """
    Packaged defaults, then the user's file, then the desk profile (if requested), then overrides.
    """
    base = _packaged("default_train.json")
    _check_schema(base, "default_train.json")
    merged: dict[str, Any] = dict(base.get("train", {}))
    desk: dict[str, Any] = dict(base.get("desk_overrides", {}))
    if path is not None:
        doc = _read_json(path)
        _check_schema(doc, str(path))
        _check_keys("<root>", doc, {"schema_version", "train", "desk_overrides"})
        user_train = doc.get("train", {})
        _check_keys("train", user_train, {f.name for f in fields(TrainConfig)})
        merged.update(user_train)
        desk.update(doc.get("desk_overrides", {}))
    if desk_scale:
        _check_keys("desk_overrides", desk, {f.name for f in fields(TrainConfig)})
        merged.update(desk)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(merged)
