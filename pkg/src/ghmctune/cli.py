"""Command-line interface.

Subcommands: tune, sample, diagnose, compare, sensitivity, sweep,
analyze-integrators.  Every RunConfig field has a flag; a JSON config file
passed with --config takes precedence over individual flags.  The default
output root comes from the GHMCTUNE_OUTPUT_ROOT environment variable.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    ConfigError,
    RunConfig,
    cmd_analyze_integrators,
    cmd_compare,
    cmd_diagnose,
    cmd_sample,
    cmd_sensitivity,
    cmd_sweep_phi_l,
    cmd_tune,
)
from .diagnostics import DiagnosticsError
from .integrators import OutOfStabilityError
from .models import DatasetError, EvaluationError
from .tuning import TuningError, TuningReport

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_CONFIG_FIELDS = [
    ("--benchmark", str, "benchmark name: gauss-<D>, blr-synthetic-<D>-<K>, blr-file, banana"),
    ("--mode", str, "sampler mode: hmc or ghmc"),
    ("--n-chains", int, "number of chains"),
    ("--n-burnin", int, "burn-in iterations for tuning"),
    ("--n-prod", int, "production iterations per chain"),
    ("--seed", int, "root seed"),
    ("--out-dir", str, "output directory"),
    ("--dataset-path", str, "dataset file for blr-file"),
    ("--integrator", str, "fixed integrator override (vv, vv2, vv3, bcss2, bcss3, me2, me3)"),
    ("--dt-fixed", float, "fixed step size override"),
    ("--fitting-mode", str, "fitting factor mode: auto, s, s_omega"),
    ("--ar-target", float, "burn-in target acceptance rate"),
    ("--h-lower", float, "lower endpoint of the dimensionless step interval"),
    ("--prior-std", float, "logistic regression prior standard deviation"),
    ("--psrf-statistic", str, "convergence statistic: max or avg"),
    ("--psrf-threshold", float, "convergence threshold"),
    ("--window", int, "post-convergence metric window"),
    ("--ess-method", str, "univariate ESS estimator: geyer or ar"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for flag, ftype, help_text in _CONFIG_FIELDS:
        parser.add_argument(flag, type=ftype, help=help_text)
    parser.add_argument("--dt-interval", type=str,
                        help="step interval override 'lo,hi'")
    parser.add_argument("--l-fixed", type=int, help="fixed trajectory length")
    parser.add_argument("--l-range", type=str,
                        help="uniform integer trajectory range 'lo,hi'")
    parser.add_argument("--l-choices", type=str,
                        help="equal-probability trajectory set 'v1,v2,...'")
    parser.add_argument("--phi-fixed", type=float, help="fixed refresh noise")
    parser.add_argument("--phi-interval", type=str,
                        help="refresh noise interval 'lo,hi'")
    parser.add_argument("--no-standardize", action="store_true",
                        help="skip covariate standardization for BLR data")
    parser.add_argument("--binary-chains", action="store_true",
                        help="store chains as compressed binary")
    parser.add_argument("--config", type=str,
                        help="JSON config file; its values override flags")


def _pair(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got '{text}'")
    return tuple(parts)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    for flag, _, _ in _CONFIG_FIELDS:
        key = flag.lstrip("-").replace("-", "_")
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.dt_interval:
        data["dt_interval"] = _pair(args.dt_interval)
    if args.l_fixed is not None:
        data["l_fixed"] = args.l_fixed
    if args.l_range:
        lo, hi = _pair(args.l_range)
        data["l_range"] = (int(lo), int(hi))
    if args.l_choices:
        data["l_choices"] = tuple(int(float(v)) for v in args.l_choices.split(","))
    if args.phi_fixed is not None:
        data["phi_fixed"] = args.phi_fixed
    if args.phi_interval:
        data["phi_interval"] = _pair(args.phi_interval)
    if args.no_standardize:
        data["standardize"] = False
    if args.binary_chains:
        data["binary_chains"] = True
    if args.config:
        file_values = json.loads(Path(args.config).read_text())
        data.update(file_values)
    if "benchmark" not in data:
        raise ConfigError("a benchmark must be given (flag or config file)")
    return RunConfig(**data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghmctune",
        description="Adaptively tuned HMC/GHMC benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_tune = sub.add_parser("tune", help="run burn-in tuning and write the report")
    _add_config_flags(p_tune)

    p_sample = sub.add_parser("sample", help="run production chains")
    _add_config_flags(p_sample)
    p_sample.add_argument("--report", type=str, help="existing tuning report path")
    p_sample.add_argument("--workers", type=int, default=1,
                          help="parallel chain workers")

    p_diag = sub.add_parser("diagnose", help="compute metrics for a finished run")
    p_diag.add_argument("run_dir", type=str)
    p_diag.add_argument("--psrf-statistic", type=str, default=None)
    p_diag.add_argument("--psrf-threshold", type=float, default=None)
    p_diag.add_argument("--window", type=int, default=None)
    p_diag.add_argument("--ess-method", type=str, default=None)

    p_cmp = sub.add_parser("compare", help="relative efficiency of run A over run B")
    p_cmp.add_argument("run_a", type=str)
    p_cmp.add_argument("run_b", type=str)
    p_cmp.add_argument("--overhead-factor-b", type=float, default=1.0)
    p_cmp.add_argument("--time-normalized", action="store_true")

    p_sens = sub.add_parser("sensitivity",
                            help="perturb the step-interval lower endpoint")
    _add_config_flags(p_sens)
    p_sens.add_argument("--deltas", type=str, default="-0.05,0,0.05",
                        help="relative perturbations, comma separated")
    p_sens.add_argument("--workers", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="factorial sweep over phi and L rules")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--phi-rules", type=str, required=True,
                         help="semicolon-separated: tuned;fixed:1;uniform:0,0.5")
    p_sweep.add_argument("--l-rules", type=str, required=True,
                         help="semicolon-separated: tuned;fixed:1;range:1,66;choice:2,5,7")
    p_sweep.add_argument("--workers", type=int, default=1)

    p_an = sub.add_parser("analyze-integrators",
                          help="emit integrator accuracy/stability tables")
    p_an.add_argument("--out-dir", type=str, default="integrator-analysis")
    p_an.add_argument("--n-grid", type=int, default=200)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "tune":
            report = cmd_tune(_config_from_args(args))
            print(report.to_json())
        elif args.command == "sample":
            config = _config_from_args(args)
            report = None
            if args.report:
                report = TuningReport.from_json(Path(args.report).read_text())
            artifacts = cmd_sample(config, report=report, workers=args.workers)
            print(f"run written to {artifacts.out_dir}")
        elif args.command == "diagnose":
            report = cmd_diagnose(args.run_dir, statistic=args.psrf_statistic,
                                  threshold=args.psrf_threshold,
                                  window=args.window, ess_method=args.ess_method)
            print(report.to_json())
        elif args.command == "compare":
            table = cmd_compare(args.run_a, args.run_b,
                                overhead_factor_b=args.overhead_factor_b,
                                time_normalized=args.time_normalized)
            print(json.dumps(table, sort_keys=True, indent=1))
        elif args.command == "sensitivity":
            deltas = [float(v) for v in args.deltas.split(",")]
            rows = cmd_sensitivity(_config_from_args(args), deltas,
                                   workers=args.workers)
            print(json.dumps(rows, sort_keys=True, indent=1))
        elif args.command == "sweep":
            rows = cmd_sweep_phi_l(_config_from_args(args),
                                   args.phi_rules.split(";"),
                                   args.l_rules.split(";"),
                                   workers=args.workers)
            print(json.dumps(rows, sort_keys=True, indent=1))
        elif args.command == "analyze-integrators":
            summary = cmd_analyze_integrators(args.out_dir, n_grid=args.n_grid)
            print(json.dumps(summary, sort_keys=True, indent=1))
    except (ConfigError, DatasetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutOfStabilityError, TuningError, DiagnosticsError,
            EvaluationError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
