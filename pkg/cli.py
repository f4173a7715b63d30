#!/usr/bin/env python3
"""
Command-line interface for Gaussian partial information decomposition.
Estimates measures from sample files, reruns the benchmark experiments,
runs the validation suite and writes synthetic samples.

Usage:
    python cli.py estimate --input data.csv --layout data.layout.json --measures tse,spectrum
    python cli.py benchmark recovery --seed 7 --out results
    python cli.py validate --system five-source --families C2
    python cli.py sample --system pure-unique --samples 1000 --out pure_unique.csv
"""

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from benchmarks import (
    EXPERIMENTS,
    TWO_SOURCE_CONFIGS,
    named_system,
    write_result,
)
from covariance_model import InputError, NumericalFailure
from empirical_data import (
    dumps_json,
    empirical_covariance,
    load_csv,
    load_layout,
    sample_gaussian,
    write_csv,
    write_json,
    write_layout,
    write_table_csv,
)
from estimators import (
    DEFAULT_SPECTRUM_CAP,
    Measure,
    MeasureRequest,
    estimate_with_ridge,
)
from oracle_validation import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_SYSTEMS,
    DiagnosticLogger,
    run_validation_suite,
)

logger = logging.getLogger(__name__)

# Configuration
ENV_PREFIX = "GPID_"
DEFAULT_MEASURES = "tse,spectrum,un"
DEFAULT_OUT_DIR = "results"
SYSTEM_NAMES = ("five-source", "scaling") + TWO_SOURCE_CONFIGS

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


@dataclass
class RunConfig:
    """Resolved options of one run; echoed into every output's metadata."""

    command: str
    experiment: Optional[str] = None
    input: Optional[str] = None
    layout: Optional[str] = None
    measures: str = DEFAULT_MEASURES
    ridge: float = 0.0
    subset: Optional[str] = None
    seed: int = 0
    trials: Optional[int] = None
    samples: Optional[int] = None
    out: Optional[str] = None
    format: Optional[str] = None
    threads: int = 1
    max_sources: int = DEFAULT_SPECTRUM_CAP
    allow_large_spectrum: bool = False
    units: str = "nats"
    header: bool = False
    system: Optional[str] = None
    sources: Optional[int] = None
    families: Optional[str] = None
    systems: int = DEFAULT_SYSTEMS
    budget: Optional[float] = None
    n_grid: Optional[str] = None
    m_grid: Optional[str] = None
    log_file: Optional[str] = None
    inject_fault: bool = False
    verbose: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


# Options that may be set through GPID_<NAME> environment variables
ENV_OPTIONS = {
    "seed": int,
    "threads": int,
    "ridge": float,
    "trials": int,
    "samples": int,
    "out": str,
    "format": str,
    "units": str,
    "measures": str,
    "layout": str,
    "input": str,
    "subset": str,
    "max_sources": int,
    "allow_large_spectrum": bool,
    "header": bool,
    "verbose": bool,
    "budget": float,
    "n_grid": str,
    "m_grid": str,
    "system": str,
    "sources": int,
    "families": str,
    "systems": int,
    "log_file": str,
}


# ============================================================================
# PARSING HELPERS
# ============================================================================

def _parse_bool(value: str, name: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off", ""):
        return False
    raise InputError(f"{name}: expected a boolean, got {value!r}")


def env_overrides(environ: Mapping[str, str]) -> Dict[str, object]:
    """
    Read GPID_* variables.

    Raises:
        InputError: unknown GPID_ variable or unparseable value
    """
    overrides = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name not in ENV_OPTIONS:
            known = ", ".join(ENV_PREFIX + k.upper() for k in sorted(ENV_OPTIONS))
            raise InputError(f"unknown environment variable {key}; known: {known}")
        kind = ENV_OPTIONS[name]
        try:
            overrides[name] = _parse_bool(raw, key) if kind is bool else kind(raw)
        except ValueError as e:
            raise InputError(f"{key}: cannot parse {raw!r} ({e})") from e
    return overrides


def parse_int_list(text: Optional[str], name: str) -> Optional[Tuple[int, ...]]:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise InputError(f"{name} must be a comma-separated list of integers, got {text!r}") from e


def parse_measures(text: str, subset: Optional[Tuple[int, ...]] = None) -> List[MeasureRequest]:
    """
    Parse a measure list such as "red,un,se:3,syn,tse,spectrum,mi".

    `un:i` restricts unique information to source i; `se` needs `:K`;
    `syn` and `mi` use the --subset selection.
    """
    requests = []
    for token in (t.strip().lower() for t in text.split(",")):
        if not token:
            continue
        name, _, arg = token.partition(":")
        try:
            measure = Measure(name)
        except ValueError:
            valid = ", ".join(m.value for m in Measure)
            raise InputError(f"unknown measure {name!r}; expected one of {valid}") from None

        number = None
        if arg:
            if not arg.isdigit():
                raise InputError(f"measure {token!r}: argument must be a positive integer")
            number = int(arg)

        if measure is Measure.SE:
            if number is None:
                raise InputError("measure 'se' needs an order, e.g. se:3")
            requests.append(MeasureRequest(measure, order=number))
        elif measure is Measure.UN:
            requests.append(MeasureRequest(measure, source=number))
        elif measure in (Measure.SYN, Measure.MI):
            requests.append(MeasureRequest(measure, subset=subset))
        else:
            requests.append(MeasureRequest(measure))
    if not requests:
        raise InputError("no measures selected")
    return requests


def resolve_config(args: argparse.Namespace, environ: Mapping[str, str]) -> RunConfig:
    """Flag > GPID_ environment variable > default."""
    overrides = env_overrides(environ)
    config = RunConfig(command=args.command)
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        flag_value = getattr(args, f.name, None)
        if flag_value is not None and flag_value is not False:
            setattr(config, f.name, flag_value)
        elif f.name in overrides:
            setattr(config, f.name, overrides[f.name])

    if getattr(args, "threads", None) is None and "threads" not in overrides:
        config.threads = os.cpu_count() or 1
    if config.format is None:
        config.format = "json" if config.command == "estimate" else "csv"
    if config.format not in ("csv", "json"):
        raise InputError(f"--format must be csv or json, got {config.format!r}")
    if config.units not in ("nats", "bits"):
        raise InputError(f"--units must be nats or bits, got {config.units!r}")
    if config.threads < 1:
        raise InputError(f"--threads must be >= 1, got {config.threads}")
    if config.ridge < 0:
        raise InputError(f"--ridge must be >= 0, got {config.ridge}")
    return config


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_estimate(config: RunConfig) -> int:
    """Empirical covariance of a sample file, optional ridge, then the selected measures."""
    if not config.input or not config.layout:
        raise InputError("estimate needs --input and --layout")
    layout = load_layout(config.layout)
    samples = load_csv(config.input, layout, header=config.header)
    cov = empirical_covariance(samples)
    subset = parse_int_list(config.subset, "--subset")

    reports = []
    for request in parse_measures(config.measures, subset):
        logger.info("estimating %s", request.measure.value)
        reports.append(estimate_with_ridge(
            cov,
            config.ridge,
            request,
            max_sources=config.max_sources,
            allow_large=config.allow_large_spectrum,
            threads=config.threads,
        ))

    if config.format == "json":
        payload = {
            "reports": [r.as_dict(config.units) for r in reports],
            "metadata": {
                "M": samples.m,
                "lambda": config.ridge,
                "units": config.units,
                "layout": layout.summary(),
                "config": config.as_dict(),
            },
        }
        if config.out:
            write_json(payload, config.out)
        else:
            print(dumps_json(payload))
        return EXIT_OK

    rows = []
    for report in reports:
        values = report.as_dict(config.units)["values"]
        for label, value in values.items():
            rows.append({
                "measure": report.measure.value,
                "label": label,
                "value": value,
                "units": config.units,
                "lambda": report.lam,
                "M": samples.m,
            })
    table = pd.DataFrame(rows)
    if config.out:
        write_table_csv(table, config.out)
    else:
        print(table.to_csv(index=False, float_format="%.17g", lineterminator="\n"), end="")
    return EXIT_OK


def cmd_benchmark(config: RunConfig) -> int:
    """Run one experiment and write its per-trial CSV and JSON summary."""
    name = config.experiment
    if name not in EXPERIMENTS:
        raise InputError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")

    kwargs = {"seed": config.seed}
    if config.trials is not None:
        kwargs["trials"] = config.trials
    if name in ("recovery", "two-source", "scaling") and config.samples is not None:
        kwargs["m"] = config.samples
    if name in ("ridge", "convergence") and config.m_grid:
        kwargs["m_grid"] = parse_int_list(config.m_grid, "--m-grid")
    if name == "scaling":
        if config.budget is not None:
            kwargs["budget_seconds"] = config.budget
        if config.n_grid:
            kwargs["n_grid"] = parse_int_list(config.n_grid, "--n-grid")
        kwargs["spectrum_cap"] = config.max_sources
        kwargs["allow_large"] = config.allow_large_spectrum
    else:
        kwargs["threads"] = config.threads

    logger.info("benchmark %s with %s", name, kwargs)
    result = EXPERIMENTS[name](**kwargs)
    out_dir = Path(config.out or DEFAULT_OUT_DIR)
    written = write_result(result, out_dir, config.format, extra_metadata=config.as_dict())
    for path in written:
        print(f"✅ {path}")
    return EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    """Run the validation suite; exit 1 if any check fails."""
    system = None
    if config.system:
        system = named_system(config.system, seed=config.seed, n=config.sources)
    families = [f.strip() for f in config.families.split(",")] if config.families else None
    if families and system is None:
        raise InputError("--families needs --system")

    diag = DiagnosticLogger(log_file=Path(config.log_file) if config.log_file else None)
    print_banner()
    results = run_validation_suite(
        seed=config.seed,
        n_systems=config.systems,
        mc_samples=config.samples or DEFAULT_MC_SAMPLES,
        system=system,
        families=families,
        inject_fault=config.inject_fault,
        diag=diag,
    )
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION_FAILED


def cmd_sample(config: RunConfig) -> int:
    """Write M synthetic samples of a named system plus its layout sidecar."""
    if not config.system:
        raise InputError(f"sample needs --system (one of {', '.join(SYSTEM_NAMES)})")
    if not config.out:
        raise InputError("sample needs --out")
    system = named_system(config.system, seed=config.seed, n=config.sources)
    samples = sample_gaussian(system, config.samples or 1000, config.seed)

    out = Path(config.out)
    write_csv(samples, out, header=config.header)
    sidecar = out.with_suffix(".layout.json")
    write_layout(system.layout, sidecar)
    print(f"✅ {out} ({samples.m} rows)")
    print(f"✅ {sidecar}")
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "validate": cmd_validate,
    "sample": cmd_sample,
}


# ============================================================================
# ENTRY POINT
# ============================================================================

def print_banner():
    print("""
╔═══════════════════════════════════════════════════════════════════╗
║                                                                   ║
║        GAUSSIAN PID - CONDITIONAL-COPY VALIDATION SUITE           ║
║                                                                   ║
╚═══════════════════════════════════════════════════════════════════╝
""")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cli.py",
        description="Closed-form Gaussian PID: redundancy, unique information and synergy spectra",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  python cli.py estimate --input x.csv --layout x.layout.json --measures un,tse
  python cli.py estimate --input x.csv --layout x.layout.json --measures syn --subset 1,2
  python cli.py benchmark two-source --trials 50 --out results
  python cli.py validate --system five-source --families C2
  python cli.py sample --system five-source --samples 1000 --out five.csv

Every option marked (env) can also be set with {ENV_PREFIX}<NAME>, e.g. {ENV_PREFIX}SEED=7.
Exit codes: 0 success, 1 validation failure, 2 input error, 3 numerical failure.
        """,
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (env, default: 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="Worker threads (env, default: available cores)")
    common.add_argument("--out", default=None, help="Output file or directory (env)")
    common.add_argument("--format", choices=["csv", "json"], default=None,
                        help="Output format (env, default: json for estimate, csv otherwise)")
    common.add_argument("--samples", type=int, default=None, help="Sample count M (env)")
    common.add_argument("--max-sources", dest="max_sources", type=int, default=None,
                        help=f"Source cap for the full spectrum (env, default: {DEFAULT_SPECTRUM_CAP})")
    common.add_argument("--allow-large-spectrum", dest="allow_large_spectrum", action="store_true",
                        help="Compute the spectrum above the source cap (env)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging (env)")

    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[common], help="Estimate measures from a CSV file")
    est.add_argument("--input", default=None, help="Sample CSV, target columns first (env)")
    est.add_argument("--layout", default=None, help="Layout JSON sidecar (env)")
    est.add_argument("--measures", default=None,
                     help=f"Comma list of red, un[:i], se:K, syn, tse, spectrum, mi (env, default: {DEFAULT_MEASURES})")
    est.add_argument("--ridge", type=float, default=None, help="Ridge lambda >= 0 (env, default: 0)")
    est.add_argument("--subset", default=None, help="Source subset for syn and mi, e.g. 1,2 (env)")
    est.add_argument("--units", choices=["nats", "bits"], default=None, help="Reported units (env)")
    est.add_argument("--header", action="store_true", help="Input CSV has a header row (env)")

    bench = sub.add_parser("benchmark", parents=[common], help="Rerun an experiment")
    bench.add_argument("experiment", choices=list(EXPERIMENTS))
    bench.add_argument("--trials", type=int, default=None, help="Trials per cell (env)")
    bench.add_argument("--budget", type=float, default=None, help="scaling: budget in seconds (env)")
    bench.add_argument("--n-grid", dest="n_grid", default=None, help="scaling: comma list of N (env)")
    bench.add_argument("--m-grid", dest="m_grid", default=None, help="ridge/convergence: comma list of M (env)")

    val = sub.add_parser("validate", parents=[common], help="Run the validation suite")
    val.add_argument("--system", choices=list(SYSTEM_NAMES), default=None,
                     help="Fixed system for the identity and oracle checks (env)")
    val.add_argument("--sources", type=int, default=None, help="N for the scaling system (env)")
    val.add_argument("--families", default=None, help="Family labels on --system, e.g. C2,U1 (env)")
    val.add_argument("--systems", type=int, default=None,
                     help=f"Random systems per structural check (env, default: {DEFAULT_SYSTEMS})")
    val.add_argument("--log-file", dest="log_file", default=None, help="Also append the report here (env)")
    val.add_argument("--inject-fault", dest="inject_fault", action="store_true", help=argparse.SUPPRESS)

    smp = sub.add_parser("sample", parents=[common], help="Write synthetic samples of a named system")
    smp.add_argument("--system", choices=list(SYSTEM_NAMES), default=None, help="System to sample (env)")
    smp.add_argument("--sources", type=int, default=None, help="N for the scaling system (env)")
    smp.add_argument("--header", action="store_true", help="Write a header row")

    return parser


def main(argv: Optional[Sequence[str]] = None, environ: Optional[Mapping[str, str]] = None) -> int:
    """Parse, configure logging, dispatch; returns the process exit code."""
    environ = os.environ if environ is None else environ
    args = build_parser().parse_args(argv)

    try:
        config = resolve_config(args, environ)
    except InputError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    logging.basicConfig(
        level=logging.DEBUG if config.verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )

    try:
        return COMMANDS[config.command](config)
    except InputError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except NumericalFailure as e:
        print(f"❌ numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
