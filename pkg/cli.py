"""
Command-line entry point for the laboratory scenarios.

    python cli.py dispersion --k 32 64 128 --oracle
    python cli.py growth --k 64
    python cli.py theorem --config runs/desk.toml --out results/
    python cli.py solve --k 16 --T 0.5

Exit codes: 0 on success, 2 when any row is FAILED or UNVERIFIED,
1 on configuration errors.
"""

import argparse
import logging
import sys
from typing import List, Optional

import pandas as pd
from pydantic import ValidationError

from config import configure_logging, settings
from dispersion import ClassificationError
from experiments import emit, run_dispersion_audit, run_growth_fit, run_solve, run_theorem
from nonlinear import NoConvergence
from schemas import DispersionRow, ExperimentConfig, GrowthFit, Report, RowStatus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zakharov-lab", description="Hadamard instability laboratory")
    parser.add_argument("--log-level", default=None, help="Override ZAKHAROV_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("dispersion", "Audit the p = 1 eigen-structure across k"),
        ("growth", "Fit the growth rate of ‖n‖ against σ"),
        ("theorem", "Run the desk-scale instability family"),
        ("solve", "Picard solve at a single k"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON or TOML ExperimentConfig file")
        cmd.add_argument("--k", type=int, nargs="+", help="Harmonics to run")
        cmd.add_argument("--s", type=int, help="Sobolev index")
        cmd.add_argument("--c0", type=float, help="Contraction constant")
        cmd.add_argument("--out", help="Output directory")
        cmd.add_argument("--oracle", action="store_true", default=None, help="Enable expm/ODE oracles")

    sub.choices["growth"].add_argument("--linear-only", action="store_true", help="Skip the direct integration")
    sub.choices["solve"].add_argument("--T", type=float, help="Final time")
    sub.choices["solve"].add_argument("--steps", type=int, help="Time steps on [0, T]")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "k_list": args.k,
        "s": args.s,
        "c0": args.c0,
        "output_dir": args.out,
        "oracle": args.oracle,
    }
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**{key: value for key, value in overrides.items() if value is not None})


def _exit_code(report: Report) -> int:
    statuses = {row.get("status", RowStatus.OK.value) for row in report.rows}
    return EXIT_PARTIAL if statuses - {RowStatus.OK.value} else EXIT_OK


def run(args: argparse.Namespace) -> int:
    cfg = load_config(args)

    if args.command == "dispersion":
        report = run_dispersion_audit(cfg)
        columns = [name for name in DispersionRow.model_fields if name not in ("spectrum", "lambdas")]
        rows = pd.DataFrame(report.rows, columns=columns)
        emit(cfg.output_dir, "dispersion", report, {"dispersion": rows})
        return _exit_code(report)

    if args.command == "growth":
        fits = [run_growth_fit(cfg, k, direct=not args.linear_only) for k in cfg.k_list]
        report = Report(config=cfg.model_dump(mode="json"), rows=[fit.model_dump(mode="json") for fit in fits])
        emit(cfg.output_dir, "growth", report, {"growth": pd.DataFrame(report.rows, columns=list(GrowthFit.model_fields))})
        return EXIT_OK

    if args.command == "theorem":
        report, table = run_theorem(cfg)
        emit(cfg.output_dir, "theorem", report, {"theorem": table})
        return _exit_code(report)

    code = EXIT_OK
    for k in cfg.k_list:
        try:
            report, tables = run_solve(cfg.run_config(k), T=args.T, steps=args.steps)
        except NoConvergence as exc:
            logger.error(f"Solve k={k}: {exc}")
            code = EXIT_PARTIAL
            continue
        emit(cfg.output_dir, f"solve_k{k}", report, {f"solve_k{k}_norms": tables["norms"], f"solve_k{k}_blocks": tables["blocks"]})
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level.upper() if args.log_level else None)
    try:
        settings.validate()
        return run(args)
    except ClassificationError as exc:
        logger.error(f"No unstable mode: {exc}")
        return EXIT_CONFIG
    except (ValidationError, ValueError, OSError) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
