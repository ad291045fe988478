"""
Analytic social-dilemma engine for the company mitigation game.

Works on a simplified world: portfolios are static (interim capital equals capital), each company
has a single investor, and nobody mitigated before the step under study. Capitals before step t are
projected forward by their expected growth, and E[K_{t+1}] is an exact expectation over the
step-t climate events. All gradients are exact derivatives of that projection.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Sequence

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.stats import qmc

from .config import AnalysisConfig, EnvConfig
from .env import fixed_policy, run_episode
from .errors import DomainError, NoSignFlipError, SearchError
from .metrics import market_total_wealth

log = logging.getLogger(__name__)

Expectation = Literal["exact", "bernoulli"]
Zone = Literal["NoDilemmaLow", "Dilemma", "NoDilemmaHigh"]


@dataclass(frozen=True)
class SimplifiedWorld:
    capital: np.ndarray
    loss: np.ndarray
    mu: np.ndarray
    lambda_tilde: np.ndarray
    p0: np.ndarray
    market_growth: float
    t: int
    # event effectiveness is scale * lambda_tilde
    scale: float = 1.0
    # candidate u_t per company; every earlier step has zero mitigation
    mitigation: np.ndarray | None = None
    expectation: Expectation = "exact"
    max_lag: int = 100

    @property
    def num_companies(self) -> int:
        return int(np.asarray(self.capital).size)

    @property
    def effectiveness(self) -> np.ndarray:
        return self.scale * np.asarray(self.lambda_tilde, dtype=np.float64)

    @property
    def candidate(self) -> np.ndarray:
        if self.mitigation is None:
            return np.zeros(self.num_companies)
        return np.asarray(self.mitigation, dtype=np.float64)

    def with_scale(self, scale: float) -> SimplifiedWorld:
        return replace(self, scale=float(scale))

    def lags(self) -> range:
        """Lags k examined by the threshold search: 0 <= k < min(t, max_lag), at least k = 0."""
        return range(max(1, min(self.t, self.max_lag)))

    @classmethod
    def from_env_config(
        cls,
        config: EnvConfig,
        t: int,
        *,
        mitigation: np.ndarray | None = None,
        expectation: Expectation = "exact",
        max_lag: int = 100,
    ) -> SimplifiedWorld:
        return cls(
            capital=config.company_capital_vector,
            loss=config.loss_vector,
            mu=config.mu,
            lambda_tilde=config.lambda_tilde,
            p0=config.p0,
            market_growth=config.market_growth,
            t=int(t),
            scale=config.alpha,
            mitigation=mitigation,
            expectation=expectation,
            max_lag=max_lag,
        )


@dataclass(frozen=True)
class GradientReport:
    lags: np.ndarray  # (K,)
    private: np.ndarray  # (K, M): dE[K^i_{t+1}] / du^i_{t-k}
    social: np.ndarray  # (K, M): dE[sum_l K^l_{t+1}] / du^i_{t-k}
    cross: np.ndarray  # (M, M): [i, j] = dE[K^j_{t+1}] / du^i_t, diagonal holds the private value


@dataclass(frozen=True)
class ThresholdResult:
    lambda_low: float
    lambda_critical: float
    zone: Zone
    queried: float = float("nan")
    diagnostics: dict[str, float] = field(default_factory=dict)


_EXACT_OUTCOMES: dict[int, np.ndarray] = {}


def _outcomes(num_events: int) -> np.ndarray:
    if num_events not in _EXACT_OUTCOMES:
        _EXACT_OUTCOMES[num_events] = np.array(list(itertools.product((0, 1), repeat=num_events)), dtype=np.float64)
    return _EXACT_OUTCOMES[num_events]


def _probs(world: SimplifiedWorld, s: int, cum: float) -> tuple[np.ndarray, np.ndarray]:
    """Event probabilities at step s and their derivative with respect to U (zero where clamped)."""
    lam = world.effectiveness
    mu = np.asarray(world.mu, dtype=np.float64)
    denom = 1.0 + lam * cum
    raw = mu * s / denom + world.p0
    probs = np.clip(raw, 0.0, 1.0)
    d_probs = np.where((raw > 0.0) & (raw < 1.0), -lam * mu * s / denom**2, 0.0)
    return probs, d_probs


def outcome_weights(
    probs: np.ndarray,
    d_probs: np.ndarray,
    expectation: Expectation,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Distribution of the event count X used for expectations: (counts, weights, d weights / dU).

    "exact" enumerates every event-indicator outcome; "bernoulli" collapses the events into a single
    indicator that fires with the total risk.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if expectation == "exact":
        o = _outcomes(probs.size)
        factors = np.where(o > 0, probs, 1.0 - probs)
        weights = factors.prod(axis=1)
        sign = np.where(o > 0, 1.0, -1.0)
        d_weights_dp = np.stack(
            [sign[:, e] * np.prod(np.delete(factors, e, axis=1), axis=1) for e in range(probs.size)],
            axis=1,
        )
        return o.sum(axis=1), weights, d_weights_dp @ d_probs
    if expectation == "bernoulli":
        survive = 1.0 - probs
        total = 1.0 - survive.prod()
        d_total_dp = np.array([np.prod(np.delete(survive, e)) for e in range(probs.size)])
        d_total = float(d_total_dp @ d_probs)
        return np.array([0.0, 1.0]), np.array([1.0 - total, total]), np.array([-d_total, d_total])
    raise ValueError("expectation must be one of: exact, bernoulli")


def _growth_terms(world: SimplifiedWorld, s: int, cum: float) -> tuple[np.ndarray, np.ndarray]:
    """g = E[max(0, 1 - X L)] per company and dg/dU."""
    probs, d_probs = _probs(world, s, cum)
    counts, weights, d_weights = outcome_weights(probs, d_probs, world.expectation)
    payoff = np.maximum(0.0, 1.0 - counts[:, None] * np.asarray(world.loss, dtype=np.float64)[None, :])
    return weights @ payoff, d_weights @ payoff


@dataclass(frozen=True)
class _Projection:
    capital: np.ndarray  # (t + 2, M); last row is E[K_{t+1}]
    cum: np.ndarray  # (t + 1,) U after spending at each step
    g: np.ndarray  # (t + 1, M)
    dg: np.ndarray  # (t + 1, M)


def _schedule(world: SimplifiedWorld) -> np.ndarray:
    u = np.zeros((world.t + 1, world.num_companies))
    u[world.t] = world.candidate
    return u


def _project(world: SimplifiedWorld, schedule: np.ndarray) -> _Projection:
    m, t = world.num_companies, world.t
    gamma = world.market_growth
    capital = np.zeros((t + 2, m))
    capital[0] = np.asarray(world.capital, dtype=np.float64)
    cums = np.zeros(t + 1)
    gs = np.zeros((t + 1, m))
    dgs = np.zeros((t + 1, m))
    cum = 0.0
    for s in range(t + 1):
        cum += float(schedule[s] @ capital[s])
        g, dg = _growth_terms(world, s, cum)
        capital[s + 1] = (1.0 - schedule[s]) * (1.0 + gamma) * g * capital[s]
        cums[s], gs[s], dgs[s] = cum, g, dg
    return _Projection(capital=capital, cum=cums, g=gs, dg=dgs)


def expected_capital(world: SimplifiedWorld, perturb: tuple[int, int, float] | None = None) -> np.ndarray:
    """
    E[K_{t+1}] per company; `perturb=(k, i, h)` sets u^i_{t-k} += h before projecting.
    """
    schedule = _schedule(world)
    if perturb is not None:
        k, i, h = perturb
        schedule[world.t - k, i] += h
    return _project(world, schedule).capital[-1]


def _lag_derivatives(world: SimplifiedWorld, sources: np.ndarray) -> np.ndarray:
    """
    d E[K^l_{t+1}] / d u^i_r for every source step r in `sources`: array (R, M_i, M_l).

    Forward recurrence over s = r..t of
      D_{s+1} = (1-u_s)(1+gamma) (g_s D_s + K_s g'_s dU_s) - [s = r] (1+gamma) g_s K_s e_i
    where dU_s accumulates K^i_r at s = r plus the spend change sum_l u^l_s D^l_s.
    """
    schedule = _schedule(world)
    proj = _project(world, schedule)
    m = world.num_companies
    gamma = world.market_growth
    sources = np.asarray(sources, dtype=np.int64)
    eye = np.eye(m)

    d = np.zeros((sources.size, m, m))
    d_cum = np.zeros((sources.size, m))
    for s in range(int(sources.min()), world.t + 1):
        u_s = schedule[s]
        k_s = proj.capital[s]
        start = (sources == s).astype(np.float64)
        d_cum = d_cum + start[:, None] * k_s[None, :] + d @ u_s
        carry = (1.0 - u_s) * (1.0 + gamma)
        d = (
            (carry * proj.g[s])[None, None, :] * d
            + (carry * k_s * proj.dg[s])[None, None, :] * d_cum[:, :, None]
            - start[:, None, None] * eye[None, :, :] * ((1.0 + gamma) * proj.g[s] * k_s)[None, None, :]
        )
    return d


def _check_lag(world: SimplifiedWorld, k: int) -> None:
    """Valid lags are 0 <= k < t; k = 0 is also accepted at t = 0, where it is the only lag."""
    if k < 0 or k >= max(world.t, 1):
        raise DomainError(f"lag k={k} must satisfy 0 <= k < t (t={world.t})")
    if k >= world.max_lag:
        raise DomainError(f"lag k={k} exceeds max_lag={world.max_lag}")


def _check_company(world: SimplifiedWorld, i: int) -> None:
    if not 0 <= i < world.num_companies:
        raise DomainError(f"company index {i} out of range 0..{world.num_companies - 1}")


def private_gradient(world: SimplifiedWorld, i: int, k: int = 0) -> float:
    _check_company(world, i)
    _check_lag(world, k)
    d = _lag_derivatives(world, np.array([world.t - k]))
    return float(d[0, i, i])


def cross_gradient(world: SimplifiedWorld, i: int, j: int) -> float:
    _check_company(world, i)
    _check_company(world, j)
    if i == j:
        raise DomainError("cross_gradient needs i != j; use private_gradient for the own effect")
    d = _lag_derivatives(world, np.array([world.t]))
    return float(d[0, i, j])


def social_gradient(world: SimplifiedWorld, i: int, k: int = 0) -> float:
    _check_company(world, i)
    _check_lag(world, k)
    d = _lag_derivatives(world, np.array([world.t - k]))
    return float(d[0, i].sum())


def gradient_report(world: SimplifiedWorld, max_lag: int | None = None) -> GradientReport:
    cap = world.max_lag if max_lag is None else int(max_lag)
    lags = np.arange(min(max(world.t, 1), cap))
    d = _lag_derivatives(world, world.t - lags)
    idx = np.arange(world.num_companies)
    return GradientReport(
        lags=lags,
        private=d[:, idx, idx],
        social=d.sum(axis=2),
        cross=d[0],
    )


def _linear_private_terms(world: SimplifiedWorld, i: int) -> tuple[float, float]:
    """At u = 0 the k = 0 private gradient is -a + scale * b."""
    base = replace(world, mitigation=np.zeros(world.num_companies), scale=0.0)
    a = -private_gradient(base, i, 0)
    b = private_gradient(base.with_scale(1.0), i, 0) + a
    return a, b


def signflip_lambda(world: SimplifiedWorld, i: int) -> float:
    """
    Effectiveness scale at which the private k = 0 gradient of company i changes sign, evaluated
    at the no-mitigation policy (U_t = 0).
    """
    _check_company(world, i)
    a, b = _linear_private_terms(world, i)
    if not b > 0.0 or not a > 0.0:
        raise NoSignFlipError(
            f"no sign flip for company {i}: own-cost term {a!r}, mitigation-benefit slope {b!r} "
            f"(needs K > 0, t > 0, L > 0 and some mu * lambda_tilde > 0)"
        )
    return a / b


def _extremes(world: SimplifiedWorld) -> tuple[float, float]:
    """(largest private gradient, largest social gradient) over companies and examined lags."""
    lags = np.asarray(list(world.lags()))
    d = _lag_derivatives(world, world.t - lags)
    idx = np.arange(world.num_companies)
    return float(d[:, idx, idx].max()), float(d.sum(axis=2).max())


def _zone(max_private: float, max_social: float) -> Zone:
    if max_private > 0.0:
        return "NoDilemmaHigh"
    if max_social > 0.0:
        return "Dilemma"
    return "NoDilemmaLow"


def _sign_change(
    fn: Callable[[float], float],
    *,
    name: str,
    rtol: float,
    maxiter: int,
    limit: float,
) -> float:
    lo = 0.0
    f_lo = fn(lo)
    if not f_lo < 0.0:
        raise SearchError(f"{name} is not negative at zero effectiveness", f_at_zero=f_lo)
    hi = 1.0
    f_hi = fn(hi)
    while f_hi <= 0.0:
        lo, hi = hi, hi * 2.0
        if hi > limit:
            raise SearchError(f"{name} never turns positive", upper=hi / 2.0, f_upper=f_hi, limit=limit)
        f_hi = fn(hi)
    root = optimize.bisect(fn, lo, hi, xtol=1e-300, rtol=rtol, maxiter=maxiter)
    return float(root)


def classify_zone(world: SimplifiedWorld, scale: float, config: AnalysisConfig | None = None) -> ThresholdResult:
    """
    Locate lambda_low (first scale where some social gradient turns positive) and lambda_critical
    (first scale where some private gradient does), then place `scale` in one of the three zones.
    """
    cfg = config or AnalysisConfig()

    def f_private(s: float) -> float:
        return _extremes(world.with_scale(s))[0]

    def f_social(s: float) -> float:
        return _extremes(world.with_scale(s))[1]

    opts = dict(rtol=cfg.bisect_rtol, maxiter=cfg.bisect_maxiter, limit=cfg.bracket_limit)
    low = _sign_change(f_social, name="max social gradient", **opts)
    critical = _sign_change(f_private, name="max private gradient", **opts)

    p_at, s_at = _extremes(world.with_scale(scale))
    return ThresholdResult(
        lambda_low=low,
        lambda_critical=critical,
        zone=_zone(p_at, s_at),
        queried=float(scale),
        diagnostics={"max_private": p_at, "max_social": s_at},
    )


def zone_table(world: SimplifiedWorld, scales: Iterable[float], config: AnalysisConfig | None = None) -> pd.DataFrame:
    """Thresholds are computed once; each row classifies one scale."""
    grid = [float(s) for s in scales]
    if not grid:
        raise DomainError("zone_table needs at least one scale")
    base = classify_zone(world, grid[0], config)
    rows = []
    for s in grid:
        p_at, s_at = _extremes(world.with_scale(s))
        rows.append(
            {
                "t": world.t,
                "scale": s,
                "zone": _zone(p_at, s_at),
                "max_private": p_at,
                "max_social": s_at,
                "lambda_low": base.lambda_low,
                "lambda_critical": base.lambda_critical,
            }
        )
    return pd.DataFrame(rows)


def gradient_frame(world: SimplifiedWorld, max_lag: int | None = None) -> pd.DataFrame:
    rep = gradient_report(world, max_lag)
    rows = []
    for a, k in enumerate(rep.lags):
        for i in range(world.num_companies):
            rows.append(
                {
                    "t": world.t,
                    "scale": world.scale,
                    "lag": int(k),
                    "company": i,
                    "private": float(rep.private[a, i]),
                    "social": float(rep.social[a, i]),
                }
            )
    return pd.DataFrame(rows)


def monte_carlo_gradient(
    world: SimplifiedWorld,
    i: int,
    k: int,
    *,
    samples: int,
    rng: np.random.Generator,
    h: float = 1e-4,
    social: bool = False,
) -> tuple[float, float]:
    """
    Central finite difference of a Monte-Carlo estimate of E[K_{t+1}].

    Step-t events are drawn once under the unperturbed policy and reweighted by their likelihood
    ratio under u^i_{t-k} +/- h, so the difference stays smooth as h -> 0. Earlier steps follow
    the same expected-growth projection as the analytic code. Draws are scrambled Sobol points;
    `samples` is rounded up to a power of two. Returns (estimate, standard error); the error uses the
    i.i.d. formula and is conservative for these points.
    """
    _check_company(world, i)
    _check_lag(world, k)
    if samples < 2:
        raise DomainError(f"samples must be >= 2, got {samples}")
    t = world.t
    loss = np.asarray(world.loss, dtype=np.float64)
    exact = world.expectation == "exact"

    def _step_t(delta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        schedule = _schedule(world)
        schedule[t - k, i] += delta
        proj = _project(world, schedule)
        probs, _ = _probs(world, t, float(proj.cum[t]))
        if not exact:
            probs = np.array([1.0 - np.prod(1.0 - probs)])
        return schedule[t], proj.capital[t], probs

    _, _, base = _step_t(0.0)
    m = (samples - 1).bit_length()
    sobol = qmc.Sobol(base.size, scramble=True, seed=rng)
    fired = sobol.random_base2(m) < base[None, :]
    x = fired.sum(axis=1).astype(np.float64)
    factor = np.maximum(0.0, 1.0 - x[:, None] * loss[None, :])

    def _weighted(delta: float) -> np.ndarray:
        u_t, k_t, probs = _step_t(delta)
        hit = np.divide(probs, base, out=np.ones_like(base), where=base > 0.0)
        miss = np.divide(1.0 - probs, 1.0 - base, out=np.ones_like(base), where=base < 1.0)
        ratio = np.where(fired, hit[None, :], miss[None, :]).prod(axis=1)
        out = (1.0 - u_t) * (1.0 + world.market_growth) * factor * k_t
        return ratio * (out.sum(axis=1) if social else out[:, i])

    diff = (_weighted(h) - _weighted(-h)) / (2.0 * h)
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(diff.size))


def schelling_curve(
    env_config: EnvConfig,
    cooperator_rate: float = 0.005,
    n_range: Sequence[int] | None = None,
    seeds: Sequence[int] = tuple(range(10)),
) -> pd.DataFrame:
    """
    Payoff of a focal company (company 0) that cooperates or defects, against the number of other
    cooperating companies. Payoffs are market total wealth at the end of an episode; the focal
    company's own final capital is reported too. Investors hold an equal-weight portfolio.
    """
    m = env_config.num_companies
    counts = list(range(m)) if n_range is None else [int(n) for n in n_range]
    for n in counts:
        if not 0 <= n <= m - 1:
            raise DomainError(f"number of other cooperators must be in 0..{m - 1}, got {n}")

    rows = []
    for n in counts:
        outcome: dict[str, float] = {"num_other_cooperators": float(n)}
        for label, focal in (("coop", cooperator_rate), ("defect", 0.0)):
            u = np.zeros(m)
            u[0] = focal
            u[1 : 1 + n] = cooperator_rate
            policy = fixed_policy(env_config, u)
            wealth, capital = [], []
            for seed in seeds:
                ep = run_episode(env_config, policy, seed)
                wealth.append(market_total_wealth(ep.final_state))
                capital.append(float(ep.final_state.company_capital[0]))
            outcome[f"payoff_{label}"] = float(np.mean(wealth))
            outcome[f"capital_{label}"] = float(np.mean(capital))
        rows.append(outcome)
        log.debug("schelling n=%d coop=%.4f defect=%.4f", n, outcome["payoff_coop"], outcome["payoff_defect"])
    df = pd.DataFrame(rows)
    df["num_other_cooperators"] = df["num_other_cooperators"].astype(int)
    return df
