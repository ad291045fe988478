from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import InputError

if TYPE_CHECKING:
    from .config import EnvConfig
    from .env import Episode, EnvState

log = logging.getLogger(__name__)

SUMMARY_SCHEMA_VERSION = 1
SUMMARY_COLUMNS = (
    "schema_version",
    "run_id",
    "algorithm",
    "alpha",
    "num_companies",
    "num_investors",
    "seed",
    "config_hash",
    "episodes",
    "market_total_wealth",
    "market_total_wealth_std",
    "final_mitigation",
    "final_mitigation_std",
    "final_climate_risk",
    "final_climate_risk_std",
    "gini_capital",
    "gini_investment",
    "agent_returns",
)


def market_total_wealth(state: EnvState) -> float:
    return float(state.company_capital.sum() + (state.investor_cash + state.holdings.sum(axis=1)).sum())


def gini(values: Iterable[float]) -> float:
    """Mean absolute difference over twice the mean, via the sorted-rank identity."""
    arr = np.sort(np.asarray(list(values), dtype=np.float64))
    if arr.size == 0:
        raise InputError("gini of an empty vector is undefined")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise InputError("gini needs finite non-negative values")
    total = arr.sum()
    if total <= 0:
        raise InputError("gini of an all-zero vector is undefined")
    n = arr.size
    index = np.arange(1, n + 1)
    return float(np.sum((2 * index - n - 1) * arr) / (n * total))


def _gini_or_nan(values: np.ndarray) -> float:
    try:
        return gini(values)
    except InputError:
        return math.nan


def empirical_price_of_anarchy(best_welfare: float, equilibrium_welfare: float) -> float:
    if not best_welfare > 0 or not equilibrium_welfare > 0:
        raise InputError(f"welfare must be positive, got best={best_welfare!r}, equilibrium={equilibrium_welfare!r}")
    if best_welfare < equilibrium_welfare:
        log.warning(
            "best welfare %.6g is below the equilibrium welfare %.6g; the best evaluated policy is not the best",
            best_welfare,
            equilibrium_welfare,
        )
    return float(best_welfare / equilibrium_welfare)


@dataclass(frozen=True)
class RunSummary:
    market_total_wealth: float
    market_total_wealth_std: float
    final_mitigation: float
    final_mitigation_std: float
    final_climate_risk: float
    final_climate_risk_std: float
    # over final company capitals, and over cumulative investment received per company
    gini_capital: float
    gini_investment: float
    agent_returns: tuple[float, ...]
    episodes: int
    seed: int | None
    config_hash: str
    run_id: str = ""
    algorithm: str = ""
    alpha: float = math.nan
    num_companies: int = 0
    num_investors: int = 0

    def to_row(self) -> dict[str, Any]:
        row = asdict(self)
        row["schema_version"] = SUMMARY_SCHEMA_VERSION
        row["agent_returns"] = json.dumps([round(float(r), 10) for r in self.agent_returns])
        return {k: row[k] for k in SUMMARY_COLUMNS}


def summarize_run(
    episodes: Sequence[Episode],
    config: EnvConfig,
    *,
    seed: int | None = None,
    run_id: str = "",
    algorithm: str = "",
) -> RunSummary:
    if not episodes:
        raise InputError("summarize_run needs at least one episode")
    wealth = np.array([market_total_wealth(ep.final_state) for ep in episodes])
    mitigation = np.array([ep.final_state.cumulative_mitigation for ep in episodes])
    risk = np.array([ep.final_state.total_risk for ep in episodes])
    g_cap = np.array([_gini_or_nan(ep.final_state.company_capital) for ep in episodes])
    g_inv = np.array([_gini_or_nan(ep.final_state.cumulative_investment) for ep in episodes])
    returns = np.mean([ep.returns for ep in episodes], axis=0)

    def _std(x: np.ndarray) -> float:
        return float(x.std(ddof=1)) if x.size > 1 else 0.0

    def _nanmean(x: np.ndarray) -> float:
        return float(np.nanmean(x)) if np.any(np.isfinite(x)) else math.nan

    return RunSummary(
        market_total_wealth=float(wealth.mean()),
        market_total_wealth_std=_std(wealth),
        final_mitigation=float(mitigation.mean()),
        final_mitigation_std=_std(mitigation),
        final_climate_risk=float(risk.mean()),
        final_climate_risk_std=_std(risk),
        gini_capital=_nanmean(g_cap),
        gini_investment=_nanmean(g_inv),
        agent_returns=tuple(float(r) for r in returns),
        episodes=len(episodes),
        seed=seed,
        config_hash=config.hash(),
        run_id=run_id,
        algorithm=algorithm,
        alpha=float(config.alpha),
        num_companies=config.num_companies,
        num_investors=config.num_investors,
    )


METRIC_COLUMNS = ("market_total_wealth", "final_mitigation", "final_climate_risk", "gini_capital", "gini_investment")


def aggregate_summaries(frame: pd.DataFrame, by: Sequence[str] = ("algorithm", "alpha")) -> pd.DataFrame:
    """Mean and sample std across seeds for every metric column, one row per group."""
    if frame.empty:
        raise InputError("no summaries to aggregate")
    ok = frame[frame["error"].isna()] if "error" in frame.columns else frame
    if ok.empty:
        raise InputError("every run in the table failed; nothing to aggregate")
    cols = [c for c in METRIC_COLUMNS if c in ok.columns]
    grouped = ok.groupby(list(by), sort=True)[cols]
    out = grouped.agg(["mean", "std"])
    out.columns = [f"{name}_{stat}" for name, stat in out.columns]
    out["seeds"] = ok.groupby(list(by), sort=True).size()
    return out.reset_index()


def price_of_anarchy_table(
    aggregated: pd.DataFrame,
    *,
    equilibrium_algorithm: str = "IPPO",
    welfare: str = "market_total_wealth_mean",
    by: str = "alpha",
) -> pd.DataFrame:
    """
    Empirical price of anarchy per `by` value: the best mean welfare over every evaluated joint
    policy divided by the equilibrium algorithm's mean welfare.
    """
    rows = []
    for key, group in aggregated.groupby(by, sort=True):
        eq = group[group["algorithm"] == equilibrium_algorithm]
        if eq.empty:
            continue
        best_idx = group[welfare].idxmax()
        best = float(group.loc[best_idx, welfare])
        equilibrium = float(eq[welfare].iloc[0])
        rows.append(
            {
                by: key,
                "best_algorithm": group.loc[best_idx, "algorithm"],
                "best_welfare": best,
                "equilibrium_algorithm": equilibrium_algorithm,
                "equilibrium_welfare": equilibrium,
                "price_of_anarchy_empirical": empirical_price_of_anarchy(best, equilibrium),
            }
        )
    return pd.DataFrame(rows)
