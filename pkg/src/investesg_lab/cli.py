from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .config import ALGORITHMS
from .errors import ConfigError, InvestESGError
from .experiments import (
    ExperimentSpec,
    run_analyze,
    run_init,
    run_schelling,
    run_simulate,
    run_summarize,
    run_sweep,
    run_train,
)
from .library import default_output_path
from .util import expand_path, parse_float_list, parse_int_list

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_PARTIAL = 4


def _print_stats(stats: dict[str, Any]) -> None:
    print(json.dumps(stats, indent=2, sort_keys=True, default=str))


def _optional_path(value: str | None) -> Path | None:
    return expand_path(value) if value else None


def _spec(args: argparse.Namespace, command: str) -> ExperimentSpec:
    def _parsed(name: str, parse):  # type: ignore[no-untyped-def]
        raw = getattr(args, name, None)
        if raw is None:
            return None
        try:
            return tuple(parse(raw))
        except ValueError as e:
            raise ConfigError(name, str(e)) from e

    algorithms = getattr(args, "algorithms", None)
    if algorithms is not None:
        algorithms = tuple(a.strip() for a in algorithms.split(",") if a.strip())
        unknown = [a for a in algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError("algorithms", f"unknown algorithm(s) {unknown}; choose from {', '.join(ALGORITHMS)}")
    return ExperimentSpec(
        command=command,
        output_dir=expand_path(args.out),
        env_config_path=_optional_path(getattr(args, "config", None)),
        train_config_path=_optional_path(getattr(args, "train_config", None)),
        seeds=_parsed("seeds", parse_int_list) or (0,),
        alphas=_parsed("alphas", parse_float_list),
        algorithms=algorithms,
        agents=_parsed("agents", parse_int_list),
        desk_scale=bool(getattr(args, "desk_scale", False)),
        resume=bool(getattr(args, "resume", False)),
        workers=int(getattr(args, "workers", 1) or 1),
        total_steps=getattr(args, "total_steps", None),
        eval_episodes=int(getattr(args, "eval_episodes", 10) or 10),
        mitigation=getattr(args, "mitigation", None),
        checkpoint=_optional_path(getattr(args, "checkpoint", None)),
    )


def cmd_init(args: argparse.Namespace) -> int:
    result = run_init(expand_path(args.out))
    _print_stats({"initialized": str(result.root), **result.paths})
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    _print_stats(run_train(_spec(args, "train")))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    _print_stats(run_simulate(_spec(args, "simulate")))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    stats = run_sweep(_spec(args, "sweep"))
    _print_stats(stats)
    return EXIT_PARTIAL if stats["failed"] else EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    _print_stats(run_analyze(_spec(args, "analyze")))
    return EXIT_OK


def cmd_schelling(args: argparse.Namespace) -> int:
    _print_stats(run_schelling(_spec(args, "schelling"), cooperator_rate=args.cooperator_rate))
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    _print_stats(run_summarize(_spec(args, "summarize"), equilibrium_algorithm=args.equilibrium))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="investesg-lab",
        description="Climate-investment social-dilemma simulator, analyzer and MARL trainer",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    sub = p.add_subparsers(dest="cmd", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--out",
        default=str(default_output_path()),
        help='Output root (default: $INVESTESG_OUT or "~/InvestESG_Runs")',
    )
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    p_init = sub.add_parser("init", parents=[common], help="Create the output root, manifest and editable configs")
    p_init.set_defaults(func=cmd_init)

    def add_env_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="Environment config JSON (default: packaged default_env.json)")
        sp.add_argument("--seeds", help='Seeds, "0,1,2" or "0-9" (default: 0)')
        sp.add_argument("--alphas", help='Mitigation-effectiveness multipliers, e.g. "1,50,70,100"')

    def add_train_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--train-config", help="Training config JSON (default: packaged default_train.json)")
        sp.add_argument("--algorithms", help=f"Comma separated, from: {', '.join(ALGORITHMS)}")
        sp.add_argument("--agents", help='Scale companies and investors together, e.g. "1,3,5"')
        sp.add_argument("--desk-scale", action="store_true", help="Reduced profile: 8 envs, 2M steps, hidden 64")
        sp.add_argument("--resume", action="store_true", help="Continue from the newest checkpoint of each run")
        sp.add_argument("--total-steps", type=int, help="Override train.total_steps")
        sp.add_argument("--eval-episodes", type=int, default=10, help="Evaluation episodes for the run summary")

    p_train = sub.add_parser("train", parents=[common], help="Train one run per (algorithm, alpha, seed)")
    add_env_opts(p_train)
    add_train_opts(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", parents=[common], help="Parallel cross product of algorithms x alphas x seeds")
    add_env_opts(p_sweep)
    add_train_opts(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_sim = sub.add_parser("simulate", parents=[common], help="Roll out fixed or trained policies")
    add_env_opts(p_sim)
    p_sim.add_argument("--mitigation", type=float, help="Constant company mitigation rate (investors equal-weight)")
    p_sim.add_argument("--checkpoint", help="Training checkpoint (.npz) to roll out instead")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", parents=[common], help="Dilemma zones, gradients and sign-flip scales")
    add_env_opts(p_an)
    p_an.set_defaults(func=cmd_analyze)

    p_sch = sub.add_parser("schelling", parents=[common], help="Cooperator vs defector payoffs (Schelling curve)")
    add_env_opts(p_sch)
    p_sch.add_argument("--cooperator-rate", type=float, default=0.005, help="Mitigation rate of cooperators")
    p_sch.set_defaults(func=cmd_schelling)

    p_sum = sub.add_parser("summarize", parents=[common], help="Aggregate run summaries and price of anarchy")
    p_sum.add_argument("--equilibrium", default="IPPO", choices=list(ALGORITHMS), help="Equilibrium baseline")
    p_sum.set_defaults(func=cmd_summarize)

    return p


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return int(args.func(args))
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except InvestESGError as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
    except OSError as e:
        log.error("I/O error: %s", e)
        return EXIT_RUNTIME
    except Exception as e:
        log.exception("unexpected %s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
