from __future__ import annotations

import itertools
import math

import numpy as np
import pandas as pd


def _pairwise_gini(x: np.ndarray) -> float:
    n = x.size
    diff = sum(abs(a - b) for a, b in itertools.product(x, x))
    return float(diff / (2.0 * n * n * x.mean()))


def test_gini_known_values_and_pairwise_definition() -> None:
    from investesg_lab.metrics import gini

    assert gini([3.0, 3.0, 3.0]) == 0.0
    assert math.isclose(gini([0.0, 0.0, 0.0, 5.0]), 0.75)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(0.0, 10.0, int(rng.integers(1, 12)))
        assert math.isclose(gini(x), _pairwise_gini(x), rel_tol=1e-12, abs_tol=1e-12)
        assert math.isclose(gini(x), gini(7.5 * x), rel_tol=1e-12, abs_tol=1e-12)
        assert 0.0 <= gini(x) < 1.0


def test_gini_rejects_degenerate_input() -> None:
    from investesg_lab.errors import InputError
    from investesg_lab.metrics import gini

    for bad in ([], [0.0, 0.0], [1.0, -1.0], [1.0, float("nan")]):
        try:
            gini(bad)
        except InputError:
            continue
        raise AssertionError(f"expected InputError for {bad}")


def test_price_of_anarchy() -> None:
    from investesg_lab.errors import InputError
    from investesg_lab.metrics import empirical_price_of_anarchy

    assert empirical_price_of_anarchy(10.0, 10.0) == 1.0
    assert empirical_price_of_anarchy(15.0, 10.0) == 1.5
    assert empirical_price_of_anarchy(8.0, 10.0) == 0.8  # logged, not raised
    for best, eq in ((0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)):
        try:
            empirical_price_of_anarchy(best, eq)
        except InputError:
            continue
        raise AssertionError("expected InputError")


def test_market_total_wealth_counts_cash_and_holdings() -> None:
    from investesg_lab.config import EnvConfig
    from investesg_lab.env import initial_state, with_state
    from investesg_lab.metrics import market_total_wealth

    cfg = EnvConfig(num_companies=2, num_investors=2).validate()
    state = with_state(
        initial_state(cfg),
        company_capital=np.array([10.0, 20.0]),
        investor_cash=np.array([1.0, 2.0]),
        holdings=np.array([[3.0, 0.0], [4.0, 5.0]]),
    )
    assert market_total_wealth(state) == 45.0


def test_summarize_run_over_fixed_policy_episodes() -> None:
    from investesg_lab.config import EnvConfig
    from investesg_lab.env import fixed_policy, run_episode
    from investesg_lab.metrics import SUMMARY_COLUMNS, market_total_wealth, summarize_run

    cfg = EnvConfig(num_companies=2, num_investors=1, episode_length=8).validate()
    eps = [run_episode(cfg, fixed_policy(cfg, 0.02), seed=s) for s in range(3)]
    s = summarize_run(eps, cfg, seed=0, run_id="r", algorithm="fixed")
    wealth = [market_total_wealth(ep.final_state) for ep in eps]
    assert math.isclose(s.market_total_wealth, float(np.mean(wealth)))
    assert math.isclose(s.market_total_wealth_std, float(np.std(wealth, ddof=1)))
    assert s.episodes == 3 and len(s.agent_returns) == cfg.num_agents
    row = s.to_row()
    assert tuple(row) == SUMMARY_COLUMNS
    assert row["config_hash"] == cfg.hash() and row["num_companies"] == 2

    single = summarize_run(eps[:1], cfg)
    assert single.market_total_wealth_std == 0.0


def _summary_frame() -> pd.DataFrame:
    rows = []
    for algo, base in (("IPPO", 100.0), ("AdAlign", 130.0), ("SumReward", 120.0)):
        for seed in range(3):
            rows.append(
                {
                    "algorithm": algo,
                    "alpha": 70.0,
                    "seed": seed,
                    "market_total_wealth": base + seed,
                    "final_mitigation": 0.1 * seed,
                    "final_climate_risk": 0.5,
                    "gini_capital": 0.1,
                    "gini_investment": 0.2,
                    "error": None,
                }
            )
    rows.append({"algorithm": "IPPO", "alpha": 70.0, "seed": 9, "error": "TrainingError: boom"})
    return pd.DataFrame(rows)


def test_aggregate_skips_failed_runs() -> None:
    from investesg_lab.metrics import aggregate_summaries

    agg = aggregate_summaries(_summary_frame())
    assert len(agg) == 3
    ippo = agg[agg["algorithm"] == "IPPO"].iloc[0]
    assert ippo["seeds"] == 3
    assert math.isclose(ippo["market_total_wealth_mean"], 101.0)
    assert math.isclose(ippo["market_total_wealth_std"], 1.0)
    assert math.isclose(ippo["final_mitigation_mean"], 0.1)


def test_price_of_anarchy_table() -> None:
    from investesg_lab.metrics import aggregate_summaries, price_of_anarchy_table

    poa = price_of_anarchy_table(aggregate_summaries(_summary_frame()))
    assert len(poa) == 1
    row = poa.iloc[0]
    assert row["best_algorithm"] == "AdAlign"
    assert math.isclose(row["price_of_anarchy_empirical"], 131.0 / 101.0)

    no_eq = price_of_anarchy_table(aggregate_summaries(_summary_frame()), equilibrium_algorithm="MAPPO")
    assert no_eq.empty


def test_aggregate_errors() -> None:
    from investesg_lab.errors import InputError
    from investesg_lab.metrics import aggregate_summaries

    failed = pd.DataFrame([{"algorithm": "IPPO", "alpha": 1.0, "error": "x"}])
    for frame in (pd.DataFrame(), failed):
        try:
            aggregate_summaries(frame)
        except InputError:
            continue
        raise AssertionError("expected InputError")


def main() -> None:
    # Run from repo root with: PYTHONPATH=src python3 tools/test_metrics.py
    test_gini_known_values_and_pairwise_definition()
    test_gini_rejects_degenerate_input()
    test_price_of_anarchy()
    test_market_total_wealth_counts_cash_and_holdings()
    test_summarize_run_over_fixed_policy_episodes()
    test_aggregate_skips_failed_runs()
    test_price_of_anarchy_table()
    test_aggregate_errors()
    print("OK: wealth, Gini, price of anarchy and aggregation.")


if __name__ == "__main__":
    main()
