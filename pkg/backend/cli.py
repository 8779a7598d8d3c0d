"""
Command-line entry point.

    python cli.py simulate [--config FILE] [--n 20 --rate 0.4 --method sw ...]
    python cli.py moments --n 20 --rate 0.6 --method new
    python cli.py impute data.csv --method new --m 20

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from models.reports import impute_report, moments_report
from models.simulation import ESTIMAND_CONTRASTS, SimulationRunner, covariate_grid, design_matrix
from utils.errors import ConfigurationError, NumericalError, ReplicateError
from utils.logging_config import configure_logging
from utils.schema import (
    DesignPayload,
    ImputeRequest,
    MomentsRequest,
    Prior,
    PriorMethod,
    respondent_count,
)
from utils.settings import build_config, parse_config_file, worker_count
from utils.table_writer import TableWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Finite-sample multiple imputation for linear regression")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run the Monte Carlo factorial and write table1-3.csv")
    sim.add_argument("--config", help="KEY=VALUE config file; flags override its values")
    sim.add_argument("--n", type=int, action="append", help="Sample size (repeatable)")
    sim.add_argument("--rate", type=float, action="append", help="Response rate r/n (repeatable)")
    sim.add_argument("--method", choices=[m.value for m in PriorMethod], action="append",
                     help="Imputation method (repeatable)")
    sim.add_argument("--m", type=int, help="Imputations per sample")
    sim.add_argument("--replicates", type=int, help="Monte Carlo samples per cell")
    sim.add_argument("--seed", type=int, help="Root seed")
    sim.add_argument("--level", type=float, help="Confidence level")
    sim.add_argument("--nu0", type=float, help="nu0 for the custom method")
    sim.add_argument("--sigma0-sq", type=float, help="sigma0^2 for the custom method")
    sim.add_argument("--out-dir", default="results", help="Directory for the CSV tables")
    sim.add_argument("--markdown", action="store_true", help="Also print rounded tables to stdout")
    sim.add_argument("--progress", action="store_true", help="Show progress bars")

    mom = sub.add_parser("moments", help="Print exact moments on the simulation design")
    mom.add_argument("--n", type=int, default=20)
    mom.add_argument("--rate", type=float, default=0.8, help="Units 0..r-1 respond, r = round(rate * n)")
    mom.add_argument("--respondents", help="Comma-separated 0-based respondent indices (overrides --rate)")
    mom.add_argument("--method", choices=[m.value for m in PriorMethod], default=PriorMethod.SW.value)
    mom.add_argument("--nu0", type=float, default=0.0)
    mom.add_argument("--sigma0-sq", type=float, default=0.0)
    mom.add_argument("--m", type=int, default=5)
    mom.add_argument("--sigma2", type=float, default=1.0)

    imp = sub.add_parser("impute", help="Multiply impute a CSV dataset with columns x1..xp and y")
    imp.add_argument("csv", help="Input CSV; an empty y marks a missing outcome")
    imp.add_argument("--intercept", action="store_true", help="Prepend a column of ones to the covariates")
    imp.add_argument("--method", choices=[m.value for m in PriorMethod], default=PriorMethod.NEW.value)
    imp.add_argument("--nu0", type=float, default=0.0)
    imp.add_argument("--sigma0-sq", type=float, default=0.0)
    imp.add_argument("--m", type=int, default=5)
    imp.add_argument("--seed", type=int, default=0)
    imp.add_argument("--level", type=float, default=0.95)
    imp.add_argument("--out", help="Write the completed datasets to this CSV")
    return parser.parse_args(argv)


def apply_cli_overrides(args: argparse.Namespace) -> dict:
    """Flags that were given, as SimulationConfig field values"""
    return {
        "n_values": args.n,
        "rates": args.rate,
        "methods": args.method,
        "m": args.m,
        "replicates": args.replicates,
        "seed": args.seed,
        "level": args.level,
        "custom_nu0": args.nu0,
        "custom_sigma0_sq": args.sigma0_sq,
    }


def run_simulate(args: argparse.Namespace) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    config = build_config(file_values, apply_cli_overrides(args))
    runner = SimulationRunner(config, workers=worker_count(), show_progress=args.progress)
    results = runner.run()
    TableWriter.write_tables(results, args.out_dir)
    if args.markdown:
        sys.stdout.write(TableWriter.render_markdown(TableWriter.build_tables(results)))
    return EXIT_OK


def run_moments(args: argparse.Namespace) -> int:
    x_all = design_matrix(covariate_grid(args.n))
    if args.respondents:
        try:
            respondents = [int(i) for i in args.respondents.split(",") if i.strip()]
        except ValueError:
            raise ConfigurationError(f"respondents must be integers, got '{args.respondents}'")
    else:
        respondents = list(range(respondent_count(args.n, args.rate)))
    try:
        prior = Prior.from_method(PriorMethod(args.method), args.nu0, args.sigma0_sq)
        request = MomentsRequest(
            design=DesignPayload(x=x_all.tolist(), respondents=respondents),
            sigma2=args.sigma2,
            m=args.m,
            prior=prior,
            contrasts=[x0.tolist() for x0 in ESTIMAND_CONTRASTS.values()],
        )
    except ValueError as e:
        raise ConfigurationError(str(e))
    sys.stdout.write(moments_report(request).model_dump_json(indent=2) + "\n")
    return EXIT_OK


def run_impute(args: argparse.Namespace) -> int:
    try:
        frame = pd.read_csv(args.csv, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigurationError(f"cannot read {args.csv}: {e}")
    if "y" not in frame.columns:
        raise ConfigurationError(f"{args.csv} has no 'y' column")
    covariates = [c for c in frame.columns if c != "y"]
    if not covariates:
        raise ConfigurationError(f"{args.csv} has no covariate columns")
    try:
        x = frame[covariates].to_numpy(dtype=float)
        y = pd.to_numeric(frame["y"], errors="raise").to_numpy(dtype=float)
    except ValueError as e:
        raise ConfigurationError(f"non-numeric data in {args.csv}: {e}")
    if np.isnan(x).any():
        raise ConfigurationError("covariates must not have missing values")
    if args.intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])

    try:
        request = ImputeRequest(
            x=x.tolist(),
            y=[None if np.isnan(v) else float(v) for v in y],
            method=PriorMethod(args.method),
            nu0=args.nu0,
            sigma0_sq=args.sigma0_sq,
            m=args.m,
            seed=args.seed,
            level=args.level,
        )
    except ValueError as e:
        raise ConfigurationError(str(e))
    response = impute_report(request)

    if args.out:
        completed = pd.DataFrame(np.asarray(response.completed).T,
                                 columns=[f"y_{k + 1}" for k in range(response.m)])
        completed.to_csv(args.out, index=False, float_format="%.17g")
        logger.info(f"Wrote {args.out}")
    sys.stdout.write(json.dumps(
        {"m": response.m, "coefficients": [c.model_dump() for c in response.coefficients]}, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {
    "simulate": run_simulate,
    "moments": run_moments,
    "impute": run_impute,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ReplicateError as e:
        logger.error(f"Replicate failed in cell {e.cell}, replicate {e.replicate}, seed path {e.seed_path}: {e.cause}",
                     exc_info=True)
        return EXIT_NUMERICAL
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
