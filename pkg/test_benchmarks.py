"""
Tests for the benchmark systems and the experiment harnesses.
Quick runs check shapes and bookkeeping; the full-size runs are marked slow.
"""

import time

import numpy as np
import pandas as pd
import pytest

from benchmarks import (
    EXPERIMENTS,
    POPULATION_VALUES,
    REPORTED_TWO_SOURCE_MEANS,
    TWO_SOURCE_CONFIGS,
    aux_bytes,
    convergence_quantities,
    json_safe,
    loglog_slope,
    named_system,
    recovery_quantities,
    run_convergence,
    run_recovery,
    run_ridge_sweep,
    run_scaling,
    run_two_source,
    sample_five_source_generative,
    scaling_system,
    summarize,
    two_source_configuration,
    two_source_table,
    write_result,
)
from covariance_model import InputError, stack_independent
from empirical_data import empirical_covariance, read_json
from estimators import (
    decompose_two_source,
    synergy_spectrum,
    total_synergistic_effect,
    unique_information,
)


# ============================================================================
# SYSTEMS
# ============================================================================

def test_five_source_entries(five_source):
    sigma = five_source.sigma
    assert np.allclose(np.diag(sigma), [1.0, 1.0, 5.0025, 5.0025, 5.0025, 5.0025, 9.0025], atol=1e-12)
    assert sigma[2, 3] == -3.0   # Cov(S1, S2)
    assert sigma[4, 5] == 1.0    # Cov(S3, S4)
    assert sigma[4, 6] == -3.0   # Cov(S3, S5)
    assert sigma[5, 6] == -3.0   # Cov(S4, S5)
    assert sigma[0, 1] == 0.0
    assert np.array_equal(sigma[2:4, 0], [1.0, 1.0])
    assert np.array_equal(sigma[4:7, 1], [1.0, 1.0, 1.0])


def test_independent_copies_double_the_synergy(five_source):
    stacked = stack_independent(five_source, five_source)
    single = synergy_spectrum(five_source)
    double = synergy_spectrum(stacked)
    assert abs(double[0] - 2 * single[0]) < 1e-9
    assert abs(double[1] - 2 * single[1]) < 1e-9
    assert abs(total_synergistic_effect(stacked) - 2 * total_synergistic_effect(five_source)) < 1e-9


@pytest.mark.slow
def test_generative_equations_match_closed_form(five_source):
    samples = sample_five_source_generative(2_000_000, seed=5)
    estimate = empirical_covariance(samples)
    assert np.abs(estimate.sigma - five_source.sigma).max() < 0.05


def test_scaling_system_is_well_conditioned_and_seeded():
    a = scaling_system(20, seed=3)
    assert a.layout.n_sources == 20
    assert a.layout.target_dim == 1
    assert np.linalg.eigvalsh(a.sigma).min() >= 0.5 - 1e-12
    assert np.array_equal(a.sigma, scaling_system(20, seed=3).sigma)
    with pytest.raises(InputError):
        scaling_system(1, seed=0)


def test_two_source_configurations():
    with pytest.raises(InputError, match="unknown two-source configuration"):
        two_source_configuration("pure-chaos")
    for name in TWO_SOURCE_CONFIGS:
        population = decompose_two_source(two_source_configuration(name))
        for quantity, reported in REPORTED_TWO_SOURCE_MEANS[name].items():
            assert abs(population[quantity] - reported) < 0.03, (name, quantity)


def test_named_system():
    assert named_system("five-source").layout.n_sources == 5
    assert named_system("scaling", seed=1, n=4).layout.n_sources == 4
    assert named_system("pure-unique").layout.n_sources == 2
    with pytest.raises(InputError):
        named_system("scaling")


def test_quantity_sets(five_source):
    values = recovery_quantities(five_source)
    assert len(values) == 4 + 1 + 10 + 10
    assert abs(values["TSE"] - POPULATION_VALUES["TSE"]) < 5e-4
    assert set(convergence_quantities(five_source)) == set(POPULATION_VALUES)


def test_aux_bytes():
    assert aux_bytes("tse", 10) == 8 * 100
    assert aux_bytes("syn", 4) == 8 * 12 * 12
    assert aux_bytes("spectrum", 4) == 8 * 12 * 12
    with pytest.raises(InputError):
        aux_bytes("nope", 3)


def test_loglog_slope():
    x = [10, 100, 1000]
    assert abs(loglog_slope(x, [1 / np.sqrt(v) for v in x]) + 0.5) < 1e-12
    assert np.isnan(loglog_slope([1, 2], [0.0, 1.0]))


def test_json_safe():
    cleaned = json_safe({"a": np.float64("nan"), "b": [np.int64(3), np.bool_(True)], 4: np.inf})
    assert cleaned == {"a": None, "b": [3, True], "4": None}


# ============================================================================
# EXPERIMENTS (SMALL)
# ============================================================================

def test_recovery_layout_and_summary():
    result = run_recovery(trials=3, m=200, seed=1)
    assert len(result.trials) == 3 * 25
    assert list(result.trials["seed"].unique()) == [1, 2, 3]
    assert len(result.summary) == 25

    tse = result.trials[result.trials["quantity"] == "TSE"]["value"]
    row = result.summary[result.summary["quantity"] == "TSE"].iloc[0]
    assert row["mean"] == pytest.approx(tse.mean(), rel=1e-12)
    assert row["sd"] == pytest.approx(tse.std(ddof=1), rel=1e-12)
    assert row["population"] == pytest.approx(POPULATION_VALUES["TSE"], abs=5e-4)
    assert len(result.timings) == 3


def test_recovery_does_not_depend_on_threads():
    a = run_recovery(trials=4, m=100, seed=2, threads=1)
    b = run_recovery(trials=4, m=100, seed=2, threads=3)
    assert a.trials.equals(b.trials)


def test_summarize_groups_and_bias():
    trials = pd.DataFrame({
        "M": [10, 10, 20, 20],
        "quantity": ["q", "q", "q", "q"],
        "value": [1.0, 3.0, 2.0, 2.0],
    })
    summary = summarize(trials, ["M"], {"q": 2.0})
    assert summary["mean"].tolist() == [2.0, 2.0]
    assert summary["bias"].tolist() == [0.0, 0.0]
    assert summary["sd"].tolist()[1] == 0.0


def test_ridge_sweep_grid():
    result = run_ridge_sweep(m_grid=(5, 10), lam_grid=(0.0, 1e-6), trials=10, seed=0)
    assert len(result.trials) == 2 * 2 * 10
    assert len(result.summary) == 4

    cells = result.summary.set_index(["M", "lambda"])
    assert cells.loc[(10, 0.0), "success_rate"] == 1.0
    assert cells.loc[(5, 1e-6), "success_rate"] == 1.0
    assert cells.loc[(10, 1e-6), "success_rate"] == 1.0
    assert cells.loc[(5, 0.0), "success_rate"] < 1.0

    optimal = result.metadata["optimal_lambda"]
    assert optimal["5"] == 1e-6
    assert result.summary["optimal"].sum() == 2


def test_convergence_small():
    result = run_convergence(m_grid=(200, 800), trials=4, seed=0)
    assert len(result.summary) == 2 * 5
    assert set(result.metadata["sd_loglog_slope"]) == set(POPULATION_VALUES)
    assert len(result.timings) == 8


def test_two_source_small():
    result = run_two_source(trials=3, m=200, seed=0, configs=("pure-unique", "pure-synergy"))
    assert len(result.trials) == 2 * 3 * 4
    assert set(result.summary["config"]) == {"pure-unique", "pure-synergy"}
    assert "deviation" in result.summary
    table = two_source_table(result)
    assert list(table.index) == ["pure-unique", "pure-synergy"]
    assert list(table.columns) == ["Red", "Un_1", "Un_2", "Syn"]
    assert list(result.tables["table"]["config"]) == ["pure-unique", "pure-synergy"]


def test_scaling_cap_and_statuses():
    result = run_scaling(trials=2, m=50, n_grid=(3, 4, 5), methods=("tse", "spectrum"), spectrum_cap=4)
    summary = result.summary.set_index(["method", "N"])
    assert (summary.loc["tse"]["status"] == "ok").all()
    assert summary.loc[("spectrum", 3), "status"] == "ok"
    assert summary.loc[("spectrum", 4), "status"] == "cap"
    assert summary.loc[("spectrum", 5), "status"] == "skipped (cap)"
    assert result.metadata["exceeds_at_N"] == {"tse": None, "spectrum": 4}
    assert len(result.trials) == 3 * 2 + 2


def test_scaling_memory_guard():
    result = run_scaling(trials=1, m=50, n_grid=(3, 4, 5), methods=("syn",), max_bytes=1000)
    statuses = result.summary["status"].tolist()
    assert statuses == ["ok", "memory", "skipped (memory)"]


def test_scaling_budget():
    result = run_scaling(budget_seconds=0.0, trials=3, m=50, n_grid=(3, 4), methods=("un",))
    assert result.summary["status"].tolist() == ["budget", "skipped (budget)"]
    assert result.summary["trials"].tolist()[0] == 1


def test_scaling_small_m_times_population_system():
    result = run_scaling(trials=1, m=3, n_grid=(4,), methods=("tse",))
    assert result.summary["status"].tolist() == ["ok"]


# ============================================================================
# OUTPUT
# ============================================================================

def test_write_result_is_byte_reproducible(tmp_path):
    first = write_result(run_two_source(trials=3, m=100, seed=9, configs=("pure-unique",)), tmp_path / "a")
    second = write_result(run_two_source(trials=3, m=100, seed=9, configs=("pure-unique",)), tmp_path / "b")
    names = [p.name for p in first]
    assert names == ["two-source_trials.csv", "two-source_summary.csv",
                     "two-source_summary.json", "two-source_table.csv", "two-source_timings.csv"]
    table_lines = first[3].read_text(encoding="utf-8").splitlines()
    assert table_lines[0] == "config,Red,Un_1,Un_2,Syn"
    assert table_lines[1].startswith("pure-unique,")
    for a, b in zip(first, second):
        if not a.name.endswith("_timings.csv"):
            assert a.read_bytes() == b.read_bytes(), a.name


def test_write_result_json(tmp_path):
    result = run_convergence(m_grid=(100,), trials=2, seed=0)
    paths = write_result(result, tmp_path, fmt="json", extra_metadata={"command": "benchmark"})
    payload = read_json(paths[0])
    assert payload["experiment"] == "convergence"
    assert payload["metadata"]["config"] == {"command": "benchmark"}
    assert len(payload["trials"]) == 2 * 5
    with pytest.raises(InputError):
        write_result(result, tmp_path, fmt="xml")


def test_experiment_registry():
    assert set(EXPERIMENTS) == {"recovery", "scaling", "ridge", "convergence", "two-source"}


# ============================================================================
# FULL-SIZE RUNS
# ============================================================================

@pytest.mark.slow
def test_recovery_covers_every_quantity():
    result = run_recovery(trials=50, m=1000, seed=0, threads=4)
    assert len(result.summary) == 4 + 1 + 10 + 10
    assert result.summary["population"].notna().all()
    for row in result.summary.itertuples():
        assert row.sd < 0.047, row.quantity
        # bias bound widened by three standard errors of the mean
        assert abs(row.bias) < 3.3e-3 + 3 * row.se_mean, row.quantity


@pytest.mark.slow
def test_two_source_grid_matches_reported_values():
    result = run_two_source(trials=50, m=1000, seed=0, threads=4)
    assert result.summary["deviation"].max() < 0.03


@pytest.mark.slow
def test_convergence_rate():
    result = run_convergence(m_grid=(500, 2000, 10_000), trials=100, seed=0, threads=4)
    tse = result.summary[result.summary["quantity"] == "TSE"].set_index("M")
    assert tse.loc[10_000, "rel_sd"] < 0.0045
    assert -0.65 <= result.metadata["sd_loglog_slope"]["TSE"] <= -0.35


@pytest.mark.slow
def test_ridge_full_grid_unregularized_success_at_m10():
    result = run_ridge_sweep(m_grid=(10,), lam_grid=(0.0,), trials=50, seed=0)
    assert result.summary["success_rate"].tolist() == [1.0]


@pytest.mark.slow
def test_tse_and_unique_information_at_300_sources():
    cov = scaling_system(300, seed=0)
    start = time.perf_counter()
    total_synergistic_effect(cov)
    for i in range(1, 301):
        unique_information(cov, i)
    assert time.perf_counter() - start < 5.0
