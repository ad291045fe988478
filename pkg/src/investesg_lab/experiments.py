"""
Experiment orchestration: binds configs to runs and writes every artifact under a `RunLibrary`.

Each `run_*` function returns a JSON-able stats dict for the CLI to print. Artifacts embed the
resolved config (or its hash) and the seed. Only the calling process writes to the manifest.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import shutil
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from . import db as db_mod
from .config import (
    AnalysisConfig,
    ConfigBundle,
    EnvConfig,
    TrainConfig,
    load_env_document,
    load_train_config,
)
from .dilemma import SimplifiedWorld, gradient_frame, schelling_curve, signflip_lambda, zone_table
from .env import Episode, describe_investor_reward, fixed_policy, run_episode, write_trajectory_csv
from .errors import ConfigError, InputError, NoSignFlipError
from .library import RunLibrary
from .metrics import aggregate_summaries, price_of_anarchy_table, summarize_run
from .nets import load_checkpoint
from .training import JointNeuralPolicy, evaluate, latest_checkpoint, load_policy_checkpoint, train
from .util import config_hash, now_ts, write_json

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    output_dir: Path
    env_config_path: Path | None = None
    train_config_path: Path | None = None
    seeds: tuple[int, ...] = (0,)
    # None means "use the value in the config file"
    alphas: tuple[float, ...] | None = None
    algorithms: tuple[str, ...] | None = None
    agents: tuple[int, ...] | None = None
    desk_scale: bool = False
    resume: bool = False
    workers: int = 1
    total_steps: int | None = None
    eval_episodes: int = 10
    mitigation: float | None = None
    checkpoint: Path | None = None

    def validate(self) -> ExperimentSpec:
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if min(self.seeds) < 0:
            raise ConfigError("seeds", f"seeds must be >= 0, got {min(self.seeds)}")
        if self.alphas is not None and not self.alphas:
            raise ConfigError("alphas", "the alpha list is empty")
        if self.algorithms is not None and not self.algorithms:
            raise ConfigError("algorithms", "the algorithm list is empty")
        if self.agents is not None and (not self.agents or min(self.agents) < 1):
            raise ConfigError("agents", "agent counts must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes", "must be >= 1")
        for p in (self.env_config_path, self.train_config_path, self.checkpoint):
            if p is not None and not Path(p).exists():
                raise ConfigError("path", f"file not found: {p}")
        return self

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, Path):
                out[k] = str(v)
        return out


@dataclass(frozen=True)
class Cell:
    """One (algorithm, alpha, agent count, seed) training run of a sweep."""

    algorithm: str
    alpha: float
    seed: int
    agents: int | None = None


def run_id_for(algorithm: str, env_config: EnvConfig, seed: int) -> str:
    return f"{algorithm}-a{env_config.alpha:g}-m{env_config.num_companies}n{env_config.num_investors}-s{seed}"


def resolve_env(spec: ExperimentSpec, cell: Cell) -> tuple[EnvConfig, AnalysisConfig]:
    env_cfg, analysis = load_env_document(spec.env_config_path)
    overrides: dict[str, Any] = {"alpha": cell.alpha}
    if cell.agents is not None:
        overrides.update(num_companies=cell.agents, num_investors=cell.agents)
    return env_cfg.with_overrides(**overrides), analysis


def resolve_cell(spec: ExperimentSpec, cell: Cell) -> tuple[EnvConfig, TrainConfig, AnalysisConfig]:
    env_cfg, analysis = resolve_env(spec, cell)
    train_cfg = load_train_config(
        spec.train_config_path,
        desk_scale=spec.desk_scale,
        overrides={"algorithm": cell.algorithm, "seed": cell.seed, "total_steps": spec.total_steps},
    )
    return env_cfg, train_cfg, analysis


def expand_cells(spec: ExperimentSpec) -> list[Cell]:
    env_cfg, _ = load_env_document(spec.env_config_path)
    base_train = load_train_config(spec.train_config_path, desk_scale=spec.desk_scale)
    alphas = spec.alphas if spec.alphas is not None else (env_cfg.alpha,)
    algorithms = spec.algorithms if spec.algorithms is not None else (base_train.algorithm,)
    agents: Iterable[int | None] = spec.agents if spec.agents is not None else (None,)
    return [
        Cell(algorithm=algo, alpha=float(a), seed=int(s), agents=n)
        for algo, a, n, s in itertools.product(algorithms, alphas, agents, spec.seeds)
    ]


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _write_jsonl(path: Path, rows: Iterable[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def _prepare_resume(metrics_path: Path, checkpoint_dir: Path, resume: bool) -> list[dict[str, Any]]:
    """Keep only metrics rows the newest checkpoint already covers; the rest are re-run."""
    if not resume:
        shutil.rmtree(checkpoint_dir, ignore_errors=True)
        _write_jsonl(metrics_path, [])
        return []
    ckpt = latest_checkpoint(checkpoint_dir)
    done = 0 if ckpt is None else int(load_checkpoint(ckpt)[1]["update"])
    kept = [r for r in _read_jsonl(metrics_path) if int(r["update"]) <= done]
    _write_jsonl(metrics_path, kept)
    return kept


def train_cell(root: Path, spec: ExperimentSpec, cell: Cell) -> dict[str, Any]:
    """
    Train one cell and write its run directory. Safe to call in a worker process: it touches only
    files inside its own run directory and returns everything the manifest needs.
    """
    library = RunLibrary(root=root)
    env_cfg, train_cfg, analysis = resolve_cell(spec, cell)
    run_id = run_id_for(cell.algorithm, env_cfg, cell.seed)
    run_dir = library.run_dir(run_id)
    ckpt_dir = library.checkpoint_dir(run_id)
    bundle = ConfigBundle(env=env_cfg, train=train_cfg, analysis=analysis).to_dict()
    write_json(run_dir / "config.json", {"run_id": run_id, "seed": cell.seed, **bundle})

    metrics_path = run_dir / "metrics.jsonl"
    history = _prepare_resume(metrics_path, ckpt_dir, spec.resume)
    with metrics_path.open("a", encoding="utf-8") as sink:

        def on_update(row: dict[str, Any]) -> None:
            record = {"run_id": run_id, **row}
            history.append(record)
            sink.write(json.dumps(record, sort_keys=True) + "\n")
            sink.flush()

        result = train(env_cfg, train_cfg, checkpoint_dir=ckpt_dir, resume=spec.resume, on_update=on_update)

    pd.DataFrame(history).to_csv(run_dir / "metrics.csv", index=False)

    eval_cfg = result.env_config or env_cfg
    episodes = evaluate(
        eval_cfg,
        result.state,
        result.agents,
        train_cfg,
        episodes=spec.eval_episodes,
        seed=cell.seed,
    )
    summary = summarize_run(episodes, eval_cfg, seed=cell.seed, run_id=run_id, algorithm=cell.algorithm)
    row = summary.to_row()
    write_json(run_dir / "summary.json", {**row, "config": bundle})
    write_trajectory_csv(run_dir / "trajectories" / "eval_0.csv", episodes[0], eval_cfg)
    return {
        "run_id": run_id,
        "status": "ok",
        "error": None,
        "summary": row,
        "metrics": history,
        "config": bundle,
        "config_hash": config_hash(bundle),
        "algorithm": cell.algorithm,
        "alpha": env_cfg.alpha,
        "num_companies": env_cfg.num_companies,
        "num_investors": env_cfg.num_investors,
        "seed": cell.seed,
    }


def _safe_train_cell(root: Path, spec: ExperimentSpec, cell: Cell) -> dict[str, Any]:
    try:
        return train_cell(root, spec, cell)
    except Exception as e:  # noqa: BLE001 - a failing cell must not stop the sweep
        log.debug("cell %s failed:\n%s", cell, traceback.format_exc())
        return _failure(spec, cell, e)


def _record(library: RunLibrary, command: str, outcome: dict[str, Any], started_at: float) -> None:
    with library.connect() as conn:
        db_mod.upsert_run(
            conn,
            run_id=outcome["run_id"],
            command=command,
            algorithm=outcome["algorithm"],
            alpha=outcome["alpha"],
            num_companies=outcome["num_companies"],
            num_investors=outcome["num_investors"],
            seed=outcome["seed"],
            config_hash=outcome["config_hash"],
            config=outcome["config"],
            status=outcome["status"],
            error=outcome["error"],
            started_at=started_at,
            finished_at=now_ts(),
        )
        if outcome["metrics"]:
            first = min(int(r["update"]) for r in outcome["metrics"])
            db_mod.truncate_metrics(conn, outcome["run_id"], after_update=first - 1)
            db_mod.append_metrics(conn, outcome["run_id"], outcome["metrics"])


def run_train(spec: ExperimentSpec) -> dict[str, Any]:
    """Train every requested (alpha, seed) pair in this process; each alpha is one run group."""
    spec.validate()
    library = RunLibrary(root=spec.output_dir)
    library.ensure_initialized()
    cells = expand_cells(spec)
    runs: list[dict[str, Any]] = []
    for cell in cells:
        started = now_ts()
        try:
            outcome = train_cell(library.root, spec, cell)
        except Exception as e:
            _record(library, "train", _failure(spec, cell, e), started)
            raise
        _record(library, "train", outcome, started)
        summary = outcome["summary"]
        runs.append(
            {
                "run_id": outcome["run_id"],
                "market_total_wealth": summary["market_total_wealth"],
                "final_mitigation": summary["final_mitigation"],
                "final_climate_risk": summary["final_climate_risk"],
                "updates": len(outcome["metrics"]),
            }
        )
        log.info("run %s done: mtw=%.4g", outcome["run_id"], summary["market_total_wealth"])
    groups = sorted({(c.algorithm, c.alpha) for c in cells})
    return {"runs": runs, "run_groups": len(groups), "output": str(library.root)}


def run_sweep(spec: ExperimentSpec) -> dict[str, Any]:
    """
    Cross product of algorithms x alphas x agent counts x seeds. Failing cells are recorded with
    their error and the sweep goes on; the aggregated table covers the cells that finished.
    """
    spec.validate()
    library = RunLibrary(root=spec.output_dir)
    library.ensure_initialized()
    cells = expand_cells(spec)
    sweep_id = f"sweep-{config_hash(spec.to_dict())}"
    sweep_dir = library.sweeps_dir / sweep_id
    write_json(sweep_dir / "sweep.json", {"sweep_id": sweep_id, "spec": spec.to_dict(), "cells": len(cells)})

    started = now_ts()
    outcomes: list[dict[str, Any]] = []
    if spec.workers == 1:
        for cell in cells:
            outcome = _safe_train_cell(library.root, spec, cell)
            _record(library, "sweep", outcome, started)
            outcomes.append(outcome)
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as executor:
            futures = {executor.submit(_safe_train_cell, library.root, spec, cell): cell for cell in cells}
            for future in as_completed(futures):
                try:
                    outcome = future.result()
                except Exception as e:  # noqa: BLE001 - e.g. a worker killed by the OS
                    outcome = _failure(spec, futures[future], e)
                _record(library, "sweep", outcome, started)
                outcomes.append(outcome)
                log.info("cell %s: %s", outcome["run_id"], outcome["status"])

    rows = []
    for o in outcomes:
        if o["summary"] is not None:
            rows.append({**o["summary"], "error": None})
        else:
            rows.append(
                {"run_id": o["run_id"], "algorithm": o["algorithm"], "alpha": o["alpha"], "seed": o["seed"],
                 "error": o["error"]}
            )
    table = pd.DataFrame(rows).sort_values(["algorithm", "alpha", "seed"], kind="stable")
    table.to_csv(sweep_dir / "summaries.csv", index=False)

    failed = [o for o in outcomes if o["status"] != "ok"]
    stats: dict[str, Any] = {
        "sweep_id": sweep_id,
        "cells": len(cells),
        "ok": len(outcomes) - len(failed),
        "failed": len(failed),
        "output": str(sweep_dir),
    }
    if len(failed) < len(outcomes):
        by = ["algorithm", "alpha"] if spec.agents is None else ["algorithm", "alpha", "num_companies"]
        agg = aggregate_summaries(table, by=by)
        agg.to_csv(sweep_dir / "aggregate.csv", index=False)
        if spec.agents is None:
            poa = price_of_anarchy_table(agg)
            if not poa.empty:
                poa.to_csv(sweep_dir / "price_of_anarchy.csv", index=False)
                stats["price_of_anarchy"] = poa.to_dict(orient="records")
    if failed:
        stats["errors"] = {o["run_id"]: o["error"] for o in failed}
    return stats


def _failure(spec: ExperimentSpec, cell: Cell, e: BaseException) -> dict[str, Any]:
    """Error outcome under the run id the cell would have had, so a retry overwrites the same manifest row."""
    try:
        env_cfg, _ = resolve_env(spec, cell)
        m, n = env_cfg.num_companies, env_cfg.num_investors
        run_id = run_id_for(cell.algorithm, env_cfg, cell.seed)
    except (ConfigError, OSError):
        m = n = cell.agents
        run_id = f"{cell.algorithm}-a{cell.alpha:g}-m{m or '?'}n{n or '?'}-s{cell.seed}"
    return {
        "run_id": run_id,
        "status": "error",
        "error": f"{type(e).__name__}: {e}",
        "summary": None,
        "metrics": [],
        "config": None,
        "config_hash": None,
        "algorithm": cell.algorithm,
        "alpha": cell.alpha,
        "num_companies": m,
        "num_investors": n,
        "seed": cell.seed,
    }


def interpretation_frame(episode: Episode, env_config: EnvConfig) -> pd.DataFrame:
    """Per-step company mitigation and capital, plus the final investment matrix as extra columns."""
    m = env_config.num_companies
    frame = pd.DataFrame({"step": np.arange(episode.length)})
    for i in range(m):
        frame[f"mitigation_{i}"] = episode.mitigation[:, i]
        frame[f"capital_{i}"] = episode.company_capital[1:, i]
    frame["cumulative_mitigation"] = episode.cumulative_mitigation[1:]
    frame["total_risk"] = episode.total_risk[1:]
    frame["num_events"] = episode.num_events
    return frame


def run_simulate(spec: ExperimentSpec) -> dict[str, Any]:
    """
    Roll out fixed policies (`mitigation`, investors equal-weight) or a trained checkpoint for every
    seed, and write trajectories, interpretation traces and a summary.
    """
    spec.validate()
    if (spec.mitigation is None) == (spec.checkpoint is None):
        raise ConfigError("simulate", "give exactly one of --mitigation or --checkpoint")
    library = RunLibrary(root=spec.output_dir)
    library.ensure_initialized()

    if spec.checkpoint is not None:
        env_cfg, train_cfg, state, agents = load_policy_checkpoint(spec.checkpoint)
        label = f"checkpoint-{spec.checkpoint.stem}"
        algorithm = train_cfg.algorithm

        def make_policy(seed: int):
            return JointNeuralPolicy(env_cfg, state, agents, train_cfg, np.random.default_rng(seed))

    else:
        env_cfg, _ = load_env_document(spec.env_config_path)
        if spec.alphas:
            env_cfg = env_cfg.with_overrides(alpha=spec.alphas[0])
        if not 0.0 <= float(spec.mitigation) <= env_cfg.max_mitigation:
            raise ConfigError("mitigation", f"must be in [0, {env_cfg.max_mitigation}]")
        label = f"fixed-u{spec.mitigation:g}"
        algorithm = "Fixed"
        policy = fixed_policy(env_cfg, float(spec.mitigation))

        def make_policy(seed: int):
            return policy

    log.info("investor reward %s", describe_investor_reward(env_cfg))
    run_id = f"simulate-{label}-a{env_cfg.alpha:g}-m{env_cfg.num_companies}n{env_cfg.num_investors}"
    run_dir = library.run_dir(run_id)
    write_json(run_dir / "config.json", {"run_id": run_id, "seeds": list(spec.seeds), "env": env_cfg.to_dict()})
    episodes = []
    for seed in spec.seeds:
        ep = run_episode(env_cfg, make_policy(seed), seed)
        episodes.append(ep)
        write_trajectory_csv(run_dir / "trajectories" / f"seed_{seed}.csv", ep, env_cfg)
        trace = interpretation_frame(ep, env_cfg)
        trace["seed"] = seed
        (run_dir / "traces").mkdir(parents=True, exist_ok=True)
        trace.to_csv(run_dir / "traces" / f"seed_{seed}.csv", index=False)
        investment = pd.DataFrame(
            ep.final_state.holdings,
            columns=[f"company_{i}" for i in range(env_cfg.num_companies)],
        )
        investment.insert(0, "investor", [f"investor_{j}" for j in range(env_cfg.num_investors)])
        investment["seed"] = seed
        investment.to_csv(run_dir / "traces" / f"investment_seed_{seed}.csv", index=False)

    summary = summarize_run(episodes, env_cfg, seed=spec.seeds[0], run_id=run_id, algorithm=algorithm)
    row = summary.to_row()
    write_json(run_dir / "summary.json", {**row, "seeds": list(spec.seeds), "env": env_cfg.to_dict()})
    started = now_ts()
    _record(
        library,
        "simulate",
        {
            "run_id": run_id,
            "status": "ok",
            "error": None,
            "metrics": [],
            "config": {"env": env_cfg.to_dict()},
            "config_hash": env_cfg.hash(),
            "algorithm": algorithm,
            "alpha": env_cfg.alpha,
            "num_companies": env_cfg.num_companies,
            "num_investors": env_cfg.num_investors,
            "seed": spec.seeds[0],
        },
        started,
    )
    return {
        "run_id": run_id,
        "episodes": len(episodes),
        "market_total_wealth": row["market_total_wealth"],
        "final_mitigation": row["final_mitigation"],
        "final_climate_risk": row["final_climate_risk"],
        "output": str(run_dir),
    }


def run_analyze(spec: ExperimentSpec) -> dict[str, Any]:
    """
    Zone tables and gradient grids for every analysis step and alpha, plus the per-company
    sign-flip scales. Analyzer errors propagate.
    """
    spec.validate()
    library = RunLibrary(root=spec.output_dir)
    library.ensure_initialized()
    env_cfg, analysis = load_env_document(spec.env_config_path)
    alphas = spec.alphas if spec.alphas is not None else (env_cfg.alpha,)
    out_dir = library.analysis_dir / f"analysis-{config_hash({'env': env_cfg.to_dict(), 'analysis': analysis.to_dict()})}"
    write_json(out_dir / "config.json", {"env": env_cfg.to_dict(), "analysis": analysis.to_dict(), "alphas": list(alphas)})

    zones, grads, flips = [], [], []
    for t in analysis.steps:
        if t >= env_cfg.episode_length:
            log.warning("analysis step %d is past the episode length %d; skipped", t, env_cfg.episode_length)
            continue
        base = SimplifiedWorld.from_env_config(
            env_cfg, t, expectation=analysis.expectation, max_lag=analysis.max_lag  # type: ignore[arg-type]
        )
        zones.append(zone_table(base, analysis.scale_grid(), analysis))
        for a in alphas:
            grads.append(gradient_frame(base.with_scale(float(a)), analysis.max_lag))
        for i in range(env_cfg.num_companies):
            try:
                flips.append({"t": t, "company": i, "signflip_scale": signflip_lambda(base, i), "reason": ""})
            except NoSignFlipError as e:
                flips.append({"t": t, "company": i, "signflip_scale": math.nan, "reason": str(e)})
    if not zones:
        raise InputError("no analysis step lies inside the episode")

    zone_df = pd.concat(zones, ignore_index=True)
    zone_df.to_csv(out_dir / "zones.csv", index=False)
    pd.concat(grads, ignore_index=True).to_csv(out_dir / "gradients.csv", index=False)
    flip_df = pd.DataFrame(flips)
    flip_df.to_csv(out_dir / "signflip.csv", index=False)

    thresholds = zone_df.groupby("t")[["lambda_low", "lambda_critical"]].first().reset_index()
    return {
        "output": str(out_dir),
        "thresholds": thresholds.to_dict(orient="records"),
        "zones_at_alpha": {
            f"t={t}": _zone_at(zone_df[zone_df["t"] == t], alphas) for t in sorted(zone_df["t"].unique())
        },
    }


def _zone_at(table: pd.DataFrame, alphas: Iterable[float]) -> dict[str, str]:
    """Zone of each requested alpha from the thresholds of the table."""
    low = float(table["lambda_low"].iloc[0])
    crit = float(table["lambda_critical"].iloc[0])
    out = {}
    for a in alphas:
        out[f"{a:g}"] = "NoDilemmaLow" if a < low else ("Dilemma" if a < crit else "NoDilemmaHigh")
    return out


def run_schelling(spec: ExperimentSpec, *, cooperator_rate: float = 0.005) -> dict[str, Any]:
    spec.validate()
    library = RunLibrary(root=spec.output_dir)
    library.ensure_initialized()
    env_cfg, _ = load_env_document(spec.env_config_path)
    if spec.alphas:
        env_cfg = env_cfg.with_overrides(alpha=spec.alphas[0])
    curve = schelling_curve(env_cfg, cooperator_rate=cooperator_rate, seeds=list(spec.seeds))
    curve["alpha"] = env_cfg.alpha
    curve["config_hash"] = env_cfg.hash()
    name = f"schelling-a{env_cfg.alpha:g}-m{env_cfg.num_companies}n{env_cfg.num_investors}-r{cooperator_rate:g}"
    path = library.schelling_dir / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(path, index=False)
    return {
        "output": str(path),
        "rows": len(curve),
        "cooperation_pays": bool((curve["payoff_coop"] > curve["payoff_defect"]).all()),
    }


def run_summarize(spec: ExperimentSpec, *, equilibrium_algorithm: str = "IPPO") -> dict[str, Any]:
    """
    Aggregate every finished run's summary.json under the output root into one table plus PoA.
    A summary whose manifest row has since been marked failed (a re-run that errored) is left out
    and listed under `stale_runs`.
    """
    library = RunLibrary(root=spec.output_dir)
    library.ensure_initialized()
    rows = []
    stale: list[str] = []
    with library.connect() as conn:
        for path in sorted(library.runs_dir.glob("*/summary.json")):
            doc = json.loads(path.read_text(encoding="utf-8"))
            doc.pop("config", None)
            doc.pop("env", None)
            doc.pop("seeds", None)
            record = db_mod.get_run(conn, str(doc.get("run_id", path.parent.name)))
            if record is not None and record["status"] != "ok":
                stale.append(record["run_id"])
                continue
            doc["updates"] = len(db_mod.metrics_for_run(conn, record["run_id"])) if record is not None else 0
            rows.append(doc)
        failed = db_mod.iter_runs(conn, where_sql="status != ?", params=("ok",))
    if not rows:
        raise InputError(f"no run summaries under {library.runs_dir}")
    table = pd.DataFrame(rows)
    table.to_csv(library.root / "summaries.csv", index=False)
    agg = aggregate_summaries(table)
    agg.to_csv(library.root / "aggregate.csv", index=False)
    stats: dict[str, Any] = {"runs": len(table), "groups": len(agg), "output": str(library.root / "aggregate.csv")}
    if failed:
        stats["failed_runs"] = {r["run_id"]: r["error"] for r in failed}
    if stale:
        stats["stale_runs"] = stale
    poa = price_of_anarchy_table(agg, equilibrium_algorithm=equilibrium_algorithm)
    if not poa.empty:
        poa.to_csv(library.root / "price_of_anarchy.csv", index=False)
        stats["price_of_anarchy"] = poa.to_dict(orient="records")
    return stats


@dataclass
class InitResult:
    root: Path
    paths: dict[str, str] = field(default_factory=dict)


def run_init(output_dir: Path) -> InitResult:
    library = RunLibrary(root=output_dir)
    library.ensure_initialized()
    return InitResult(
        root=library.root,
        paths={
            "runs": str(library.runs_dir),
            "sweeps": str(library.sweeps_dir),
            "analysis": str(library.analysis_dir),
            "schelling": str(library.schelling_dir),
            "manifest": str(library.db_path),
            "env_config": str(library.env_config_path),
            "train_config": str(library.train_config_path),
        },
    )
