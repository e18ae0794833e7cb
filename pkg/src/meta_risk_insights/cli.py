"""Copyright (c) 2023, Aydin Abdi.

Command line interface for the meta-risk-insights package.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Tuple  # noqa: F401

import numpy as np
from loguru import logger

from meta_risk_insights import __version__
from meta_risk_insights.analyzer import analyze
from meta_risk_insights.canonical import canonical_dump, transform
from meta_risk_insights.data_classes import Design
from meta_risk_insights.exceptions import InvalidInputError, MetaRiskError
from meta_risk_insights.grouping import group
from meta_risk_insights.log import (
    default_logging,
    log_execution_time,
    verbose_logging,
)
from meta_risk_insights.mu_estimators import RULE_NAMES, rule_from_name
from meta_risk_insights.report import (
    figure1_readme,
    write_curve_csv,
    write_json,
    write_rows,
    write_table_csv,
)
from meta_risk_insights.risk import (
    DEFAULT_WORKERS,
    figure1_dataset,
    minimax_bound,
    risk_curve,
)
from meta_risk_insights.study_loader import StudyLoader

FIGURE1_SIZES = (5, 15)


def parse_float_list(text: str, name: str) -> Tuple[float, ...]:
    """Parse ``1:2:4`` into floats."""
    try:
        return tuple(float(value) for value in text.split(":") if value.strip())
    except ValueError:
        raise InvalidInputError(f"{name} must be a colon-separated list, got {text!r}")


def parse_design(text: str) -> Design:
    """Parse ``s2=1:2:4,nu=1:1:2`` into a Design."""
    fields = {}
    for item in text.split(","):
        key, separator, value = item.partition("=")
        if not separator:
            raise InvalidInputError(f"expected s2=...,nu=..., got {text!r}")
        fields[key.strip().lower()] = value
    if set(fields) != {"s2", "nu"}:
        raise InvalidInputError(f"expected s2=...,nu=..., got {text!r}")
    variances = parse_float_list(fields["s2"], "s2")
    multiplicities = parse_float_list(fields["nu"], "nu")
    if any(not value.is_integer() for value in multiplicities):
        raise InvalidInputError(
            f"multiplicities must be integers, got {fields['nu']!r}"
        )
    return Design(variances, tuple(int(value) for value in multiplicities))


def parse_grid(text: str) -> np.ndarray:
    """Parse ``0,0.5,1`` or ``log:LO:HI:K``; log grids also contain 0."""
    if text.startswith("log:"):
        values = parse_float_list(text[4:], "log grid")
        if len(values) != 3 or not 0 < values[0] < values[1] or values[2] < 2:
            raise InvalidInputError(
                f"log grids are log:LO:HI:K with 0 < LO < HI, got {text!r}"
            )
        log_grid = np.geomspace(values[0], values[1], int(values[2]))
        return np.concatenate(([0.0], log_grid))
    try:
        grid = np.array([float(value) for value in text.split(",") if value.strip()])
    except ValueError:
        raise InvalidInputError(f"invalid tau2 grid {text!r}")
    if grid.size == 0 or np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise InvalidInputError(
            f"tau2 grid values must be finite and non-negative: {text!r}"
        )
    return grid


class ArgsParser:
    """Class for handling command line arguments."""

    def __init__(self) -> None:
        """Initialize the ArgsParser class."""
        self._parser = None  # type: Optional[argparse.ArgumentParser]

    @staticmethod
    def _add_output(parser: argparse.ArgumentParser, default: str) -> None:
        parser.add_argument(
            "-o",
            "--out",
            dest="out",
            type=str,
            default=default,
            help=f"Path of the output (default: {default}).",
        )

    @staticmethod
    def _add_format(parser: argparse.ArgumentParser, default: str) -> None:
        parser.add_argument(
            "--format",
            dest="format",
            choices=("json", "csv"),
            default=default,
            help=f"Output format (default: {default}).",
        )

    def add_arguments(self) -> argparse.ArgumentParser:
        """Add command line arguments."""
        parser = argparse.ArgumentParser(
            prog="meta-risk-insights",
            usage="%(prog)s {analyze,canonical,risk-curve,figure1} [options]",
            description=(
                "Estimate the common mean and heterogeneity of a random-effects "
                "meta-analysis and compute the R-risk of its estimators."
            ),
            epilog=("Documentation: 'https://meta-risk-insights.readthedocs.io'."),
        )
        parser.add_argument(
            "-v",
            "--version",
            action="version",
            version=__version__,
            help="Show the version of the program.",
        )
        parser.add_argument(
            "-vv",
            "--verbose",
            action="store_true",
            dest="verbose",
            help="Enable verbose logging.",
        )
        commands = parser.add_subparsers(dest="command", metavar="command")

        analyze_parser = commands.add_parser(
            "analyze", help="Estimate tau2 and mu for a CSV of studies."
        )
        analyze_parser.add_argument(
            "-i",
            "--input",
            dest="input",
            type=str,
            required=True,
            help="CSV file with columns effect,std_error[,group_id].",
        )
        analyze_parser.add_argument(
            "--tau-method",
            dest="tau_method",
            type=str,
            default=None,
            help="tau2 estimator: dl, hedges, mp, reml, mh or moment:q=...,r=... "
            "(default: dl, hedges, mp and reml).",
        )
        analyze_parser.add_argument(
            "--mu-method",
            dest="mu_method",
            type=str,
            default=None,
            help=f"Estimator of mu: {RULE_NAMES} (default: all built-in rules).",
        )
        self._add_output(analyze_parser, "outputs/analysis.json")
        self._add_format(analyze_parser, "json")

        canonical_parser = commands.add_parser(
            "canonical", help="Dump the canonical representation and its identities."
        )
        canonical_parser.add_argument(
            "-i",
            "--input",
            dest="input",
            type=str,
            required=True,
            help="CSV file with columns effect,std_error[,group_id].",
        )
        canonical_parser.add_argument(
            "--tau2",
            dest="tau2",
            type=float,
            default=1.0,
            help="tau2 at which the identity residuals are evaluated (default: 1).",
        )
        self._add_output(canonical_parser, "outputs/canonical.json")

        curve_parser = commands.add_parser(
            "risk-curve", help="Compute the R-risk of a rule over a tau2 grid."
        )
        source = curve_parser.add_mutually_exclusive_group(required=True)
        source.add_argument(
            "--design",
            dest="design",
            type=str,
            help="Design as s2=1:2:4,nu=1:1:2.",
        )
        source.add_argument(
            "-i",
            "--input",
            dest="input",
            type=str,
            help="CSV file whose variances define the design.",
        )
        curve_parser.add_argument(
            "--rule",
            dest="rule",
            type=str,
            required=True,
            help=f"Estimator of mu: {RULE_NAMES}.",
        )
        curve_parser.add_argument(
            "--grid",
            dest="grid",
            type=str,
            default=None,
            help="tau2 grid as 0,0.5,1 or log:LO:HI:K (default: 0 and 40 log points).",
        )
        curve_parser.add_argument(
            "--samples",
            dest="samples",
            type=int,
            default=None,
            help="Monte Carlo samples per point "
            "(default: META_RISK_SAMPLES or 1000000).",
        )
        curve_parser.add_argument(
            "--seed",
            dest="seed",
            type=int,
            required=True,
            help="Seed of the random streams.",
        )
        curve_parser.add_argument(
            "--workers",
            dest="workers",
            type=int,
            default=DEFAULT_WORKERS,
            help=f"Number of worker threads (default: {DEFAULT_WORKERS}).",
        )
        self._add_output(curve_parser, "outputs/risk_curve.csv")
        self._add_format(curve_parser, "csv")

        figure_parser = commands.add_parser(
            "figure1", help="Write the equal-uncertainty risk curves for n = 5 and 15."
        )
        figure_parser.add_argument(
            "--s2",
            dest="s2",
            type=float,
            default=1.0,
            help="Common study variance (default: 1).",
        )
        figure_parser.add_argument(
            "--grid",
            dest="grid",
            type=str,
            default=None,
            help="tau2 grid as 0,0.5,1 or log:LO:HI:K.",
        )
        self._add_output(figure_parser, "outputs/figure1")
        return parser

    @property
    def parser(self) -> argparse.ArgumentParser:
        """Return the parser object.

        Returns:
            ArgumentParser object.
        """
        if not self._parser:
            self._parser = self.add_arguments()
        return self._parser

    def help(self) -> None:
        """Print help message."""
        self.parser.print_help()

    def usage(self) -> None:
        """Print usage message."""
        self.parser.print_usage()


class Cli:
    """Class for handling command line interface."""

    def __init__(self) -> None:
        """Initialize the cli class."""
        self.args_parser = ArgsParser()
        self.args = None  # type: Optional[argparse.Namespace]

    def analyze(self, args: argparse.Namespace) -> Path:
        """Run the estimators on a CSV file and write the report."""
        study_set = StudyLoader(args.input).study_set
        summary = analyze(study_set, args.tau_method, args.mu_method)
        if summary["single_group"]:
            logger.warning("Only one distinct variance: reporting the sample mean.")
        if args.format == "csv":
            rows = []
            for name, entry in summary["mu"].items():  # type: ignore[union-attr]
                tau2 = entry.get("tau2", entry.get("induced_tau2", ""))
                rows.append((name, entry["mu"], tau2))
            return write_rows(args.out, ("rule", "mu", "tau2"), rows)
        return write_json(args.out, summary)

    def canonical(self, args: argparse.Namespace) -> Path:
        """Write the canonical representation of a CSV file."""
        grouped = group(StudyLoader(args.input).study_set)
        return write_json(args.out, canonical_dump(transform(grouped), args.tau2))

    def risk_curve(self, args: argparse.Namespace) -> Path:
        """Compute a risk curve and write it."""
        if args.design:
            design = parse_design(args.design)
        else:
            design = group(StudyLoader(args.input).study_set).design
        rule = rule_from_name(args.rule)
        grid = parse_grid(args.grid) if args.grid else None
        curve = risk_curve(design, rule, grid, args.samples, args.seed, args.workers)
        bound = minimax_bound(design.n) if design.n > 3 else None
        if args.format == "json":
            payload = {
                "rule": curve.rule,
                "group_variances": list(design.group_variances),
                "multiplicities": list(design.multiplicities),
                "seed": curve.seed,
                "minimax": bound,
                "points": [
                    {
                        "tau2": point.tau2,
                        "r_risk": point.r_risk,
                        "mc_se": point.mc_std_error,
                        "method": point.method,
                    }
                    for point in curve.points
                ],
            }
            return write_json(args.out, payload)
        return write_curve_csv(args.out, curve, bound)

    def figure1(self, args: argparse.Namespace) -> Path:
        """Write the figure1 CSV files and their README."""
        directory = Path(args.out)
        grid = parse_grid(args.grid) if args.grid else None
        for n in FIGURE1_SIZES:
            table = figure1_dataset(n, args.s2, grid)
            write_table_csv(str(directory / f"figure1_n{n}.csv"), table)
        readme = directory / "README.txt"
        readme.write_text(figure1_readme(FIGURE1_SIZES, args.s2), encoding="utf-8")
        logger.info(f"Risk table description saved to: {readme.absolute()}")
        return directory

    def run(self, args: argparse.Namespace) -> Path:
        """Main execution method."""
        commands = {
            "analyze": self.analyze,
            "canonical": self.canonical,
            "risk-curve": self.risk_curve,
            "figure1": self.figure1,
        }
        return commands[args.command](args)

    def cli_main(self, args: Optional[List[str]] = None) -> None:
        """Main method for the command line interface.

        Args:
            args: Command line arguments.
        """
        if args is None:
            args = sys.argv[1:]
        if not args:
            self.args_parser.usage()
            return None
        self.args = self.args_parser.parser.parse_args(args)
        if self.args.verbose:
            verbose_logging()
            logger.info("Log level set to DEBUG.")
        else:
            default_logging()
            logger.info("Log level set to INFO.")
        if self.args.command is None:
            self.args_parser.help()
            return None
        logger.info(f"Starting {self.args.command}...")
        try:
            output = self.run(self.args)
        except MetaRiskError as error:
            logger.error(f"{self.args.command} failed: {error}")
            raise SystemExit(1)
        logger.info(f"{self.args.command} finished: {output}")


@log_execution_time
def main(args: Optional[List[str]] = None) -> None:
    """Main method for the command line interface.

    Args:
        args: Command line arguments.
    """
    cli = Cli()
    cli.cli_main(args=args)


if __name__ == "__main__":
    """Entry point."""
    main()
