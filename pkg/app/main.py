import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.api.commands import (
    cmd_adapt, cmd_eval, cmd_gen_data, cmd_gradcheck, cmd_sample, cmd_train_a2m, cmd_train_sync
)
from app.models.errors import MimicError, NumericalError
from app.models.schemas import SolverMethod
from app.settings.config import load_config
from app.utils.logging import install_excepthook, set_level, setup_logger

logger = setup_logger("Main")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

COMMANDS = ("gen-data", "train-sync", "train-a2m", "adapt", "sample", "eval", "gradcheck")


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1"""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="mimic", description="Stylized audio-to-motion generation and renderer adaptation")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, help="Run directory")
    parser.add_argument("--emit-csv", action="store_true", help="Export per-frame sample values")
    parser.add_argument("--audio", type=Path, help="Driving audio file for sample")
    parser.add_argument("--prompt", type=Path, help="Style prompt file for sample")
    parser.add_argument("--cfg-w", type=float, help="Guidance weight")
    parser.add_argument("--ode-steps", type=int)
    parser.add_argument("--ode-method", choices=[m.value for m in SolverMethod])
    parser.add_argument("--resume", action="store_true", help="Continue train-a2m from its checkpoint")
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config values set on the command line"""
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.emit_csv:
        overrides["emit_csv"] = True
    paths = {k: v for k, v in (("out", args.out), ("audio", args.audio), ("prompt", args.prompt)) if v is not None}
    if paths:
        overrides["paths"] = paths
    solver = {k: v for k, v in (("cfg_w", args.cfg_w), ("steps", args.ode_steps), ("method", args.ode_method)) if v is not None}
    if solver:
        overrides["solver"] = solver
    if args.resume:
        overrides["a2m"] = {"resume": True}
    return overrides


def _emit(payload: Any) -> None:
    print(json.dumps(payload, sort_keys=True, default=str))


def run(args: argparse.Namespace) -> int:
    if args.command == "gradcheck":
        results, report = cmd_gradcheck(seed=args.seed or 0)
        sys.stdout.write(report)
        return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL

    config = load_config(args.config, overrides_from(args))
    set_level(config.log.level)
    logger.info(f"Running {args.command}", extra={"seed": config.seed, "out": str(config.paths.out)})

    if args.command == "gen-data":
        _emit(cmd_gen_data(config).model_dump(exclude={"clips"}))
    elif args.command == "train-sync":
        _emit(cmd_train_sync(config))
    elif args.command == "train-a2m":
        _emit(cmd_train_a2m(config))
    elif args.command == "adapt":
        _emit(cmd_adapt(config))
    elif args.command == "sample":
        _emit(cmd_sample(config).model_dump(mode="json"))
    elif args.command == "eval":
        _emit({"metrics": str(cmd_eval(config))})
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    install_excepthook(logger)
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except ValidationError as e:
        logger.error("Invalid configuration", extra={"errors": e.errors(include_url=False)})
        return EXIT_VALIDATION
    except (MimicError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
