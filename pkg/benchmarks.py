"""
Benchmark systems and experiment harnesses.
Closed-form construction of the five-source benchmark, the random scaling
systems and the two-source configurations, plus the recovery, scaling,
ridge-sweep, convergence and two-source experiments with their writers.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from covariance_model import BlockLayout, InputError, JointCovariance, NumericalFailure
from empirical_data import (
    SampleMatrix,
    empirical_covariance,
    make_rng,
    sample_gaussian,
    trial_seed,
    write_json,
    write_table_csv,
)
from estimators import (
    DEFAULT_SPECTRUM_CAP,
    Measure,
    MeasureRequest,
    decompose_two_source,
    estimate_with_ridge,
    narrow_synergy,
    parallel_map,
    subset_synergy_scan,
    synergy_spectrum,
    total_synergistic_effect,
    unique_information,
)

logger = logging.getLogger(__name__)

# ============================================================================
# REFERENCE VALUES AND GRIDS
# ============================================================================

# Population values of the five-source benchmark, in nats (3 decimals)
POPULATION_VALUES = {
    "SE_2": 3.727,
    "SE_3": 3.268,
    "TSE": 6.443,
    "Syn{1,2}": 3.140,
    "Syn{3,4,5}": 2.853,
}

# Reported SE_4 / SE_5 of the same system
SPECTRUM_TAIL = {"SE_4": 0.34, "SE_5": -0.90}

# Reference plug-in means at M = 1000 (Red, Un_1, Un_2, Syn) for the two-source configurations
REPORTED_TWO_SOURCE_MEANS = {
    "pure-redundancy": {"Red": 0.14, "Un_1": 0.20, "Un_2": 0.21, "Syn": 0.00},
    "pure-unique": {"Red": 0.00, "Un_1": 0.35, "Un_2": 0.00, "Syn": 0.00},
    "pure-synergy": {"Red": 0.06, "Un_1": 0.15, "Un_2": 0.14, "Syn": 0.20},
    "mixed-correlated": {"Red": 0.13, "Un_1": 0.19, "Un_2": 0.19, "Syn": 0.13},
    "mixed-asymmetric": {"Red": 0.06, "Un_1": 0.50, "Un_2": 0.03, "Syn": 0.32},
}

TWO_SOURCE_CONFIGS = tuple(REPORTED_TWO_SOURCE_MEANS)

DEFAULT_TRIALS = 50
DEFAULT_SAMPLES = 1000

RIDGE_M_GRID = (10, 12, 15, 25, 50, 100, 500)
RIDGE_LAMBDA_GRID = (0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1e-1, 1.0)

CONVERGENCE_M_GRID = (50, 100, 200, 500, 1000, 2000, 5000, 10000)
CONVERGENCE_TRIALS = 100

SCALING_N_GRID = (5, 10, 12, 15, 20, 50, 100, 200, 300, 400)
SCALING_TRIALS = 10
SCALING_BUDGET_SECONDS = 1000.0
SCALING_MAX_BYTES = 2 * 1024 ** 3
SCALING_METHODS = ("tse", "un", "syn", "spectrum")

# Latent variances of (T2, T3, U, V1, V2, eps_1..eps_5); the scale of U, V1, V2 is a
# standard deviation of 2 and each eps_i has standard deviation 0.05
FIVE_SOURCE_LATENT_VARIANCES = np.array([1.0, 1.0, 4.0, 4.0, 4.0] + [0.0025] * 5)


@dataclass
class ExperimentResult:
    """
    Output of one experiment.

    Attributes:
        name: Experiment name (file stem of every output)
        trials: Per-trial rows in long format, one row per quantity
        summary: Aggregates recomputable from `trials`
        metadata: Seeds, grids and reference values (no wall-clock data)
        timings: Wall-clock rows, kept apart so `trials` is reproducible
        tables: Extra derived tables, written as <name>_<key>.csv
    """

    name: str
    trials: pd.DataFrame
    summary: pd.DataFrame
    metadata: dict = field(default_factory=dict)
    timings: Optional[pd.DataFrame] = None
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)


# ============================================================================
# SYSTEMS
# ============================================================================

def five_source_loadings() -> np.ndarray:
    """
    Loading matrix mapping the latent vector (T2, T3, U, V1, V2, eps_1..eps_5)
    to the observed (T2, T3, S1..S5):

        S1 = T2 + U + eps_1        S3 = T3 + V1 + eps_3
        S2 = T2 - U + eps_2        S4 = T3 + V2 + eps_4
                                   S5 = T3 - V1 - V2 + eps_5
    """
    loadings = np.zeros((7, 10))
    loadings[0, 0] = 1.0
    loadings[1, 1] = 1.0
    loadings[2, [0, 2]] = [1.0, 1.0]
    loadings[3, [0, 2]] = [1.0, -1.0]
    loadings[4, [1, 3]] = [1.0, 1.0]
    loadings[5, [1, 4]] = [1.0, 1.0]
    loadings[6, [1, 3, 4]] = [1.0, -1.0, -1.0]
    loadings[2:, 5:] = np.eye(5)
    return loadings


def five_source_benchmark() -> JointCovariance:
    """Covariance of T = (T2, T3) and the five scalar sources, assembled analytically."""
    loadings = five_source_loadings()
    sigma = loadings @ np.diag(FIVE_SOURCE_LATENT_VARIANCES) @ loadings.T
    return JointCovariance(BlockLayout(2, (1,) * 5), sigma)


def sample_five_source_generative(m: int, seed: int) -> SampleMatrix:
    """Draw the five-source system from its generative equations rather than from Sigma."""
    if m < 1:
        raise InputError(f"sample count must be >= 1, got {m}")
    rng = make_rng(seed)
    latent = rng.standard_normal((int(m), 10)) * np.sqrt(FIVE_SOURCE_LATENT_VARIANCES)
    return SampleMatrix(BlockLayout(2, (1,) * 5), latent @ five_source_loadings().T)


def scaling_system(n: int, seed: int) -> JointCovariance:
    """
    Random (N+1)-dim system Sigma = A A^T / N + 0.5 I with A standard normal.

    The first coordinate is the scalar target, the other N are scalar
    sources. The 0.5 offset bounds the smallest eigenvalue from below.
    """
    if n < 2:
        raise InputError(f"scaling system needs N >= 2, got {n}")
    rng = make_rng(seed)
    a = rng.standard_normal((n + 1, n + 1))
    sigma = a @ a.T / n + 0.5 * np.eye(n + 1)
    return JointCovariance(BlockLayout.scalar(n), 0.5 * (sigma + sigma.T))


def two_source_configuration(name: str) -> JointCovariance:
    """
    3x3 covariance of (T, S1, S2) for a named two-source configuration.

    All noises have unit variance. pure-redundancy: S_i = T + eps_i.
    The others draw S1, S2 with unit variance first: pure-unique
    T = S1 + eps; pure-synergy T = S1 + S2 + eps; mixed-correlated as
    pure-synergy with Corr(S1, S2) = 0.3; mixed-asymmetric T = 2 S1 + S2 + eps.
    """
    if name == "pure-redundancy":
        sigma = [[1.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]
    elif name == "pure-unique":
        sigma = [[2.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    elif name == "pure-synergy":
        sigma = [[3.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]]
    elif name == "mixed-correlated":
        sigma = [[3.6, 1.3, 1.3], [1.3, 1.0, 0.3], [1.3, 0.3, 1.0]]
    elif name == "mixed-asymmetric":
        sigma = [[6.0, 2.0, 1.0], [2.0, 1.0, 0.0], [1.0, 0.0, 1.0]]
    else:
        raise InputError(
            f"unknown two-source configuration {name!r}; expected one of {', '.join(TWO_SOURCE_CONFIGS)}"
        )
    return JointCovariance(BlockLayout.scalar(2), np.array(sigma))


def named_system(name: str, seed: int = 0, n: Optional[int] = None) -> JointCovariance:
    """Look up a system by name: five-source, scaling (needs n) or a two-source configuration."""
    if name == "five-source":
        return five_source_benchmark()
    if name == "scaling":
        if n is None:
            raise InputError("the scaling system needs a source count N")
        return scaling_system(n, seed)
    return two_source_configuration(name)


# ============================================================================
# QUANTITIES
# ============================================================================

def recovery_quantities(cov: JointCovariance) -> Dict[str, float]:
    """Global spectrum, TSE, every pair synergy and every triple synergy."""
    values = {}
    for k, se in enumerate(synergy_spectrum(cov), start=2):
        values[f"SE_{k}"] = se
    values["TSE"] = total_synergistic_effect(cov)
    for size in (2, 3):
        for subset, syn in subset_synergy_scan(cov, size).items():
            values["Syn{" + ",".join(str(i) for i in subset) + "}"] = syn
    return values


def convergence_quantities(cov: JointCovariance) -> Dict[str, float]:
    spectrum = synergy_spectrum(cov)
    return {
        "SE_2": spectrum[0],
        "SE_3": spectrum[1],
        "TSE": total_synergistic_effect(cov),
        "Syn{1,2}": narrow_synergy(cov, (1, 2)),
        "Syn{3,4,5}": narrow_synergy(cov, (3, 4, 5)),
    }


def population_reference(quantities: Callable[[JointCovariance], Dict[str, float]]) -> Dict[str, float]:
    """Closed-form values of a quantity set on the five-source benchmark."""
    return quantities(five_source_benchmark())


# ============================================================================
# AGGREGATION
# ============================================================================

def summarize(trials: pd.DataFrame, keys: Sequence[str], population: Dict[str, float]) -> pd.DataFrame:
    """
    Mean, SD (ddof=1), median and bias per (keys..., quantity).

    Args:
        trials: Long-format rows with a `quantity` and a `value` column
        keys: Grouping columns besides `quantity`
        population: Reference value per quantity

    Returns:
        One row per group, sorted by the grouping columns
    """
    group_cols = list(keys) + ["quantity"]
    grouped = trials.groupby(group_cols, sort=True)["value"]
    summary = grouped.agg(n="count", mean="mean", sd="std", median="median").reset_index()
    summary["population"] = summary["quantity"].map(population)
    summary["bias"] = summary["mean"] - summary["population"]
    summary["rel_sd"] = summary["sd"] / summary["population"].abs()
    summary["se_mean"] = summary["sd"] / np.sqrt(summary["n"])
    return summary


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


def _long_rows(base: dict, values: Dict[str, float]) -> List[dict]:
    return [dict(base, quantity=q, value=float(v)) for q, v in values.items()]


def _timed(fn: Callable[[], Dict[str, float]]) -> Tuple[Dict[str, float], float]:
    start = time.perf_counter()
    values = fn()
    return values, time.perf_counter() - start


# ============================================================================
# EXPERIMENTS
# ============================================================================

def run_recovery(
    trials: int = DEFAULT_TRIALS,
    m: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int = 1,
) -> ExperimentResult:
    """
    Plug-in recovery on the five-source benchmark.

    Each trial samples M points with seed `seed + t`, forms the empirical
    covariance and evaluates the spectrum, TSE and every pair and triple
    synergy.
    """
    population_cov = five_source_benchmark()
    population = population_reference(recovery_quantities)

    def one_trial(t: int):
        s = trial_seed(seed, t)
        cov = empirical_covariance(sample_gaussian(population_cov, m, s))
        values, seconds = _timed(lambda: recovery_quantities(cov))
        return _long_rows({"trial": t, "seed": s, "M": m}, values), {"trial": t, "M": m, "seconds": seconds}

    logger.info("recovery: %d trials at M=%d, seed %d", trials, m, seed)
    outcomes = parallel_map(one_trial, range(trials), threads)
    rows = [row for trial_rows, _ in outcomes for row in trial_rows]
    trials_df = pd.DataFrame(rows)
    summary = summarize(trials_df, ["M"], population)
    summary["reported"] = summary["quantity"].map({**POPULATION_VALUES, **SPECTRUM_TAIL})

    return ExperimentResult(
        name="recovery",
        trials=trials_df,
        summary=summary,
        metadata={"trials": trials, "M": m, "seed": seed, "trial_seeds": f"{seed}+t"},
        timings=pd.DataFrame([timing for _, timing in outcomes]),
    )


def aux_bytes(method: str, n: int) -> int:
    """Bytes of the largest auxiliary covariance Gamma a scaling method factorizes."""
    if method in ("tse", "un"):
        dim = n
    elif method == "syn":
        dim = n * (n - 1)
    elif method == "spectrum":
        dim = max(k * comb(n, k) for k in range(1, n + 1))
    else:
        raise InputError(f"unknown scaling method {method!r}")
    return 8 * dim * dim


def _scaling_call(method: str, cov: JointCovariance) -> Callable[[], object]:
    if method == "tse":
        return lambda: total_synergistic_effect(cov)
    if method == "un":
        return lambda: [unique_information(cov, i) for i in range(1, cov.n_sources + 1)]
    if method == "syn":
        return lambda: narrow_synergy(cov)
    if method == "spectrum":
        return lambda: synergy_spectrum(cov, allow_large=True)
    raise InputError(f"unknown scaling method {method!r}")


def run_scaling(
    budget_seconds: float = SCALING_BUDGET_SECONDS,
    trials: int = SCALING_TRIALS,
    m: int = DEFAULT_SAMPLES,
    n_grid: Sequence[int] = SCALING_N_GRID,
    seed: int = 0,
    methods: Sequence[str] = SCALING_METHODS,
    max_bytes: int = SCALING_MAX_BYTES,
    spectrum_cap: int = DEFAULT_SPECTRUM_CAP,
    allow_large: bool = False,
) -> ExperimentResult:
    """
    Wall-clock scaling of TSE, all Un_i, Syn and the full spectrum in N.

    Per (method, N): one discarded warm-up call, then `trials` timed calls
    on independent scaling systems, single-threaded, perf_counter clock.
    Covariance estimation is not timed; when M <= N + 1 the population
    system itself is timed. A method stops at the first N whose
    median exceeds the budget, whose Gamma would exceed `max_bytes`, or
    (spectrum only) which exceeds the N cap.
    """
    timing_rows = []
    status_rows = []

    for method in methods:
        exceeded = None
        for n in sorted(n_grid):
            if exceeded is not None:
                status_rows.append({"method": method, "N": n, "median_seconds": float("nan"),
                                    "trials": 0, "status": f"skipped ({exceeded})"})
                continue
            if method == "spectrum" and n >= spectrum_cap and not allow_large:
                exceeded = "cap"
            elif aux_bytes(method, n) > max_bytes:
                exceeded = "memory"
            if exceeded is not None:
                logger.info("scaling %s: N=%d exceeds the %s limit", method, n, exceeded)
                status_rows.append({"method": method, "N": n, "median_seconds": float("nan"),
                                    "trials": 0, "status": exceeded})
                continue

            seconds = []
            for t in range(trials):
                s = trial_seed(seed, t)
                system = scaling_system(n, s)
                cov = empirical_covariance(sample_gaussian(system, m, s)) if m > n + 1 else system
                call = _scaling_call(method, cov)
                if t == 0:
                    call()
                start = time.perf_counter()
                call()
                elapsed = time.perf_counter() - start
                seconds.append(elapsed)
                timing_rows.append({"method": method, "N": n, "trial": t, "seed": s, "seconds": elapsed})
                if elapsed > budget_seconds:
                    break

            median = float(np.median(seconds))
            status = "ok"
            if median > budget_seconds:
                status = exceeded = "budget"
            logger.info("scaling %s: N=%d median %.4fs (%s)", method, n, median, status)
            status_rows.append({"method": method, "N": n, "median_seconds": median,
                                "trials": len(seconds), "status": status})

    summary = pd.DataFrame(status_rows)
    exceed_at = {}
    monotone = {}
    for method in methods:
        rows = summary[summary["method"] == method]
        stopped = rows[rows["status"].isin(["budget", "memory", "cap"])]
        exceed_at[method] = int(stopped["N"].iloc[0]) if len(stopped) else None
        medians = rows["median_seconds"].dropna().to_numpy()
        monotone[method] = bool(np.all(np.diff(medians) >= 0))

    return ExperimentResult(
        name="scaling",
        trials=pd.DataFrame(timing_rows, columns=["method", "N", "trial", "seed", "seconds"]),
        summary=summary,
        metadata={
            "budget_seconds": budget_seconds,
            "trials": trials,
            "M": m,
            "seed": seed,
            "max_bytes": max_bytes,
            "spectrum_cap": spectrum_cap,
            "exceeds_at_N": exceed_at,
            "monotone_medians": monotone,
            "timed": "estimator only, covariance estimation excluded",
        },
    )


def run_ridge_sweep(
    m_grid: Sequence[int] = RIDGE_M_GRID,
    lam_grid: Sequence[float] = RIDGE_LAMBDA_GRID,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    threads: int = 1,
) -> ExperimentResult:
    """
    TSE relative error and Cholesky success over an (M, lambda) grid.

    Trial t uses seed `seed + t` at every M. The optimal lambda per M is the
    fully successful lambda with the smallest mean relative error.
    """
    population_cov = five_source_benchmark()
    tse_true = total_synergistic_effect(population_cov)
    request = MeasureRequest(Measure.TSE)

    def one_trial(t: int) -> List[dict]:
        s = trial_seed(seed, t)
        rows = []
        for m in m_grid:
            cov = empirical_covariance(sample_gaussian(population_cov, m, s))
            for lam in lam_grid:
                try:
                    tse = estimate_with_ridge(cov, lam, request).values[0]
                    success = True
                except NumericalFailure:
                    tse = float("nan")
                    success = False
                rows.append({
                    "trial": t, "seed": s, "M": m, "lambda": lam, "success": success,
                    "tse": tse, "rel_error": abs(tse - tse_true) / abs(tse_true),
                })
        return rows

    logger.info("ridge sweep: %d M values x %d lambdas x %d trials", len(m_grid), len(lam_grid), trials)
    trials_df = pd.DataFrame([row for rows in parallel_map(one_trial, range(trials), threads) for row in rows])

    grouped = trials_df.groupby(["M", "lambda"], sort=True)
    summary = grouped.agg(
        trials=("success", "size"),
        successes=("success", "sum"),
        mean_rel_error=("rel_error", "mean"),
        median_rel_error=("rel_error", "median"),
    ).reset_index()
    summary["success_rate"] = summary["successes"] / summary["trials"]

    optimal = {}
    for m, cells in summary.groupby("M", sort=True):
        full = cells[cells["successes"] == cells["trials"]]
        if len(full):
            optimal[int(m)] = float(full.sort_values(["mean_rel_error", "lambda"])["lambda"].iloc[0])
        else:
            optimal[int(m)] = None
    summary["optimal"] = [optimal.get(int(m)) == lam for m, lam in zip(summary["M"], summary["lambda"])]

    return ExperimentResult(
        name="ridge",
        trials=trials_df,
        summary=summary,
        metadata={
            "trials": trials,
            "seed": seed,
            "M_grid": list(m_grid),
            "lambda_grid": list(lam_grid),
            "population_tse": tse_true,
            "optimal_lambda": {str(m): lam for m, lam in optimal.items()},
        },
    )


def run_convergence(
    m_grid: Sequence[int] = CONVERGENCE_M_GRID,
    trials: int = CONVERGENCE_TRIALS,
    seed: int = 0,
    threads: int = 1,
) -> ExperimentResult:
    """Bias, SD and relative SD of SE_2, SE_3, TSE, Syn{1,2} and Syn{3,4,5} against M."""
    population_cov = five_source_benchmark()
    population = population_reference(convergence_quantities)

    def one_trial(t: int):
        s = trial_seed(seed, t)
        rows, timings = [], []
        for m in m_grid:
            cov = empirical_covariance(sample_gaussian(population_cov, m, s))
            values, seconds = _timed(lambda: convergence_quantities(cov))
            rows += _long_rows({"trial": t, "seed": s, "M": m}, values)
            timings.append({"trial": t, "M": m, "seconds": seconds})
        return rows, timings

    logger.info("convergence: %d trials over M in %s", trials, list(m_grid))
    outcomes = parallel_map(one_trial, range(trials), threads)
    trials_df = pd.DataFrame([row for rows, _ in outcomes for row in rows])
    summary = summarize(trials_df, ["M"], population)
    summary["reported"] = summary["quantity"].map(POPULATION_VALUES)

    slopes = {}
    for quantity, rows in summary.groupby("quantity", sort=True):
        slopes[quantity] = loglog_slope(rows["M"], rows["sd"])

    return ExperimentResult(
        name="convergence",
        trials=trials_df,
        summary=summary,
        metadata={
            "trials": trials,
            "seed": seed,
            "M_grid": list(m_grid),
            "sd_loglog_slope": slopes,
        },
        timings=pd.DataFrame([row for _, timings in outcomes for row in timings]),
    )


def run_two_source(
    trials: int = DEFAULT_TRIALS,
    m: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int = 1,
    configs: Sequence[str] = TWO_SOURCE_CONFIGS,
) -> ExperimentResult:
    """Plug-in (Red, Un_1, Un_2, Syn) for every two-source configuration."""
    rows = []
    population_rows = []
    timings = []
    for name in configs:
        system = two_source_configuration(name)
        population = decompose_two_source(system)
        population_rows += [{"config": name, "quantity": q, "population": v} for q, v in population.items()]

        def one_trial(t: int):
            s = trial_seed(seed, t)
            cov = empirical_covariance(sample_gaussian(system, m, s))
            values, seconds = _timed(lambda: decompose_two_source(cov))
            return _long_rows({"config": name, "trial": t, "seed": s, "M": m}, values), seconds

        for t, (trial_rows, seconds) in enumerate(parallel_map(one_trial, range(trials), threads)):
            rows += trial_rows
            timings.append({"config": name, "trial": t, "M": m, "seconds": seconds})

    trials_df = pd.DataFrame(rows)
    grouped = trials_df.groupby(["config", "quantity"], sort=False)["value"]
    summary = grouped.agg(n="count", mean="mean", sd="std", median="median").reset_index()
    summary = summary.merge(pd.DataFrame(population_rows), on=["config", "quantity"], how="left")
    summary["reported"] = [REPORTED_TWO_SOURCE_MEANS[c][q] for c, q in zip(summary["config"], summary["quantity"])]
    summary["deviation"] = (summary["mean"] - summary["reported"]).abs()

    result = ExperimentResult(
        name="two-source",
        trials=trials_df,
        summary=summary,
        metadata={"trials": trials, "M": m, "seed": seed, "configs": list(configs)},
        timings=pd.DataFrame(timings),
    )
    result.tables["table"] = two_source_table(result).reset_index()
    return result


def two_source_table(result: ExperimentResult) -> pd.DataFrame:
    """Wide (config x Red/Un_1/Un_2/Syn) table of plug-in means."""
    table = result.summary.pivot(index="config", columns="quantity", values="mean")
    order = [c for c in TWO_SOURCE_CONFIGS if c in table.index]
    return table.loc[order, ["Red", "Un_1", "Un_2", "Syn"]]


# ============================================================================
# OUTPUT
# ============================================================================

def json_safe(value):
    """Numpy scalars to Python, non-finite floats to None, recursively."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _records(df: pd.DataFrame) -> List[dict]:
    return json_safe(df.to_dict(orient="records"))


def write_result(
    result: ExperimentResult,
    out_dir: Path,
    fmt: str = "csv",
    extra_metadata: Optional[dict] = None,
) -> List[Path]:
    """
    Write an experiment to `out_dir`.

    csv: <name>_trials.csv, <name>_summary.csv and <name>_summary.json.
    Extra tables go to <name>_<key>.csv in both formats.
    json: a single <name>.json with trials, summary and metadata.
    Timings, when present, always go to <name>_timings.csv.
    """
    out_dir = Path(out_dir)
    metadata = json_safe(dict(result.metadata))
    if extra_metadata:
        metadata["config"] = json_safe(extra_metadata)
    written = []

    if fmt == "csv":
        written.append(write_table_csv(result.trials, out_dir / f"{result.name}_trials.csv"))
        written.append(write_table_csv(result.summary, out_dir / f"{result.name}_summary.csv"))
        written.append(write_json(
            {"experiment": result.name, "summary": _records(result.summary), "metadata": metadata},
            out_dir / f"{result.name}_summary.json",
        ))
    elif fmt == "json":
        written.append(write_json(
            {
                "experiment": result.name,
                "trials": _records(result.trials),
                "summary": _records(result.summary),
                "metadata": metadata,
            },
            out_dir / f"{result.name}.json",
        ))
    else:
        raise InputError(f"unknown output format {fmt!r}; expected csv or json")

    for key, table in result.tables.items():
        written.append(write_table_csv(table, out_dir / f"{result.name}_{key}.csv"))

    if result.timings is not None:
        written.append(write_table_csv(result.timings, out_dir / f"{result.name}_timings.csv"))

    for path in written:
        logger.info("wrote %s", path)
    return written


EXPERIMENTS = {
    "recovery": run_recovery,
    "scaling": run_scaling,
    "ridge": run_ridge_sweep,
    "convergence": run_convergence,
    "two-source": run_two_source,
}
