"""
Desk-scale stochastic reproductions: alpha threshold, AdAlign vs PPO, SumReward scaling and the
sign of the cooperative bias.

Every check trains real agents with the reduced profile (8 envs, 2M steps unless --total-steps is
given), so a full run takes hours. Results land in <out>/desk_repro.json.

Usage:
  PYTHONPATH=src python3 tools/desk_repro.py --out /tmp/desk --workers 4
  PYTHONPATH=src python3 tools/desk_repro.py --out /tmp/desk --criteria 7 --total-steps 200000
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
from scipy import stats as sp_stats

log = logging.getLogger("desk_repro")


class DeskRun:
    def __init__(self, root: Path, seeds: tuple[int, ...], workers: int, total_steps: int | None) -> None:
        self.root = root
        self.seeds = seeds
        self.workers = workers
        self.total_steps = total_steps
        self._cache: dict[str, pd.DataFrame] = {}

    def sweep(
        self,
        name: str,
        *,
        algorithms: tuple[str, ...],
        alphas: tuple[float, ...],
        agents: tuple[int, ...] | None = None,
        train_overrides: dict[str, Any] | None = None,
    ) -> pd.DataFrame:
        """Summaries of one sweep under <root>/<name>; failed cells abort the check."""
        if name in self._cache:
            return self._cache[name]
        from investesg_lab.experiments import ExperimentSpec, run_sweep
        from investesg_lab.util import write_json

        out = self.root / name
        train_path = None
        if train_overrides:
            train_path = out / "train_overrides.json"
            write_json(train_path, {"schema_version": 1, "train": train_overrides})
        spec = ExperimentSpec(
            command="sweep",
            output_dir=out,
            train_config_path=train_path,
            seeds=self.seeds,
            alphas=alphas,
            algorithms=algorithms,
            agents=agents,
            desk_scale=True,
            workers=self.workers,
            total_steps=self.total_steps,
        )
        log.info("sweep %s: %s x alpha %s x agents %s x seeds %s", name, algorithms, alphas, agents, self.seeds)
        result = run_sweep(spec)
        if result["failed"]:
            raise RuntimeError(f"sweep {name} had failed cells: {result.get('errors')}")
        frame = pd.read_csv(Path(result["output"]) / "summaries.csv")
        self._cache[name] = frame
        return frame

    def metrics(self, name: str, run_id: str) -> pd.DataFrame:
        path = self.root / name / "runs" / run_id / "metrics.jsonl"
        rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        return pd.DataFrame(rows)


def check_alpha_threshold(desk: DeskRun) -> dict[str, Any]:
    """1x1 PPO: median final mitigation at alpha 70 is at least 5x the alpha 1 median."""
    frame = desk.sweep("alpha_threshold", algorithms=("IPPO",), alphas=(1.0, 30.0, 70.0), agents=(1,))
    med = frame.groupby("alpha")["final_mitigation"].median()
    ratio = float(med[70.0] / med[1.0]) if med[1.0] > 0 else float("inf")
    return {
        "median_final_mitigation": {f"{a:g}": float(v) for a, v in med.items()},
        "ratio_70_over_1": ratio,
        "passed": bool(med[70.0] > 0 and ratio >= 5.0),
    }


def check_adalign_vs_ppo(desk: DeskRun, esg: float) -> dict[str, Any]:
    """
    Full game at alpha 70: AdAlign welfare >= PPO status quo, AdAlign mitigates no more than PPO
    with ESG incentives and reaches a final climate risk within 0.05 of it.
    """
    main = desk.sweep("full_game", algorithms=("IPPO", "AdAlign"), alphas=(70.0,))
    esg_frame = desk.sweep("full_game_esg", algorithms=("IPPO",), alphas=(70.0,), train_overrides={"esg_weights": esg})
    means = main.groupby("algorithm")[["market_total_wealth", "final_mitigation", "final_climate_risk"]].mean()
    esg_means = esg_frame[["market_total_wealth", "final_mitigation", "final_climate_risk"]].mean()
    aa, ppo = means.loc["AdAlign"], means.loc["IPPO"]
    risk_gap = abs(float(aa["final_climate_risk"]) - float(esg_means["final_climate_risk"]))
    return {
        "adalign": aa.to_dict(),
        "ppo_status_quo": ppo.to_dict(),
        f"ppo_esg_{esg:g}": esg_means.to_dict(),
        "risk_gap": risk_gap,
        "passed": bool(
            aa["market_total_wealth"] >= ppo["market_total_wealth"]
            and aa["final_mitigation"] <= esg_means["final_mitigation"]
            and risk_gap <= 0.05
        ),
    }


def check_sum_reward_scaling(desk: DeskRun) -> dict[str, Any]:
    """SumReward keeps >= 90% of AdAlign welfare at 1x1 but falls below it at 3x3 in most seeds."""
    frame = desk.sweep("sum_reward", algorithms=("SumReward", "AdAlign"), alphas=(70.0,), agents=(1, 3))
    wide = frame.pivot_table(index=["num_companies", "seed"], columns="algorithm", values="market_total_wealth")
    wide["ratio"] = wide["SumReward"] / wide["AdAlign"]
    at1 = wide.loc[1, "ratio"]
    at3 = wide.loc[3, "ratio"]
    below = int((at3 < 0.9).sum())
    return {
        "ratio_1x1": at1.tolist(),
        "ratio_3x3": at3.tolist(),
        "passed": bool(at1.mean() >= 0.9 and below > len(at3) / 2),
    }


def check_cooperative_bias(desk: DeskRun) -> dict[str, Any]:
    """AdAlign's early cooperative bias is positive and its magnitude shrinks over training."""
    frame = desk.sweep("full_game", algorithms=("IPPO", "AdAlign"), alphas=(70.0,))
    early, updates, magnitudes = [], [], []
    for run_id in frame.loc[frame["algorithm"] == "AdAlign", "run_id"]:
        hist = desk.metrics("full_game", run_id)
        head = max(1, len(hist) // 10)
        early.append(float(hist["coop_bias"].iloc[:head].mean()))
        updates.extend(hist["update"].tolist())
        magnitudes.extend(hist["coop_bias"].abs().tolist())
    trend = sp_stats.kendalltau(updates, magnitudes)
    return {
        "early_bias_per_seed": early,
        "early_bias_mean": float(np.mean(early)),
        "kendall_tau": float(trend.statistic),
        "p_value": float(trend.pvalue),
        "passed": bool(np.mean(early) > 0 and trend.statistic < 0),
    }


def main(argv: list[str] | None = None) -> int:
    from investesg_lab.util import expand_path, parse_int_list, write_json

    p = argparse.ArgumentParser(description="Desk-scale stochastic reproductions")
    p.add_argument("--out", required=True, help="Output directory for the sweeps and the report")
    p.add_argument("--seeds", default="0-2", help='Seeds, "0,1,2" or "0-2" (default: 0-2)')
    p.add_argument("--workers", type=int, default=1, help="Worker processes per sweep")
    p.add_argument("--total-steps", type=int, help="Override the desk profile's 2M steps")
    p.add_argument("--criteria", default="7,8,9,10", help="Subset of checks to run")
    p.add_argument("--esg", type=float, default=10.0, help="ESG weight of the incentivized PPO baseline")
    p.add_argument("--verbose", action="store_true")
    args = p.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
    )
    root = expand_path(args.out)
    desk = DeskRun(root, tuple(parse_int_list(args.seeds)), args.workers, args.total_steps)
    checks: dict[str, Callable[[], dict[str, Any]]] = {
        "7": lambda: check_alpha_threshold(desk),
        "8": lambda: check_adalign_vs_ppo(desk, args.esg),
        "9": lambda: check_sum_reward_scaling(desk),
        "10": lambda: check_cooperative_bias(desk),
    }
    report: dict[str, Any] = {}
    for key in [c.strip() for c in args.criteria.split(",") if c.strip()]:
        if key not in checks:
            p.error(f"unknown criterion {key!r}; choose from {', '.join(checks)}")
        report[key] = checks[key]()
        log.info("criterion %s: %s", key, "passed" if report[key]["passed"] else "FAILED")

    write_json(root / "desk_repro.json", report)
    print(json.dumps(report, indent=2, sort_keys=True, default=str))
    return 0 if all(r["passed"] for r in report.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
