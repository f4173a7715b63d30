"""
End-to-end tests of the command-line interface through cli.main().
"""

import argparse
import json
import math
from pathlib import Path

import pytest
from jsonschema import Draft7Validator

from cli import (
    ENV_OPTIONS,
    EXIT_INPUT_ERROR,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    EXIT_VALIDATION_FAILED,
    build_parser,
    env_overrides,
    main,
    parse_measures,
)
from covariance_model import InputError
from estimators import Measure


@pytest.fixture
def pure_unique_files(tmp_path):
    csv_path = tmp_path / "pure_unique.csv"
    code = main(["sample", "--system", "pure-unique", "--samples", "20000", "--seed", "3",
                 "--out", str(csv_path)], environ={})
    assert code == EXIT_OK
    return csv_path, tmp_path / "pure_unique.layout.json"


@pytest.fixture
def rank_deficient_files(tmp_path):
    # 5 rows, 7 columns, S1 constant
    rows = [
        "1,2,1,0.5,3,1,2",
        "2,1,1,1.5,2,0,1",
        "3,4,1,2.0,5,2,0",
        "4,3,1,0.0,1,1,3",
        "5,5,1,1.0,4,3,1",
    ]
    csv_path = tmp_path / "tiny.csv"
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    layout_path = tmp_path / "tiny.layout.json"
    layout_path.write_text(json.dumps({"target_dim": 2, "source_dims": [1, 1, 1, 1, 1]}), encoding="utf-8")
    return csv_path, layout_path


# ============================================================================
# ESTIMATE
# ============================================================================

def test_unique_information_from_samples(tmp_path, pure_unique_files):
    csv_path, layout_path = pure_unique_files
    report_path = tmp_path / "report.json"
    code = main(["estimate", "--input", str(csv_path), "--layout", str(layout_path),
                 "--measures", "un", "--out", str(report_path)], environ={})
    assert code == EXIT_OK

    payload = json.loads(report_path.read_text(encoding="utf-8"))
    assert set(payload) == {"reports", "metadata"}
    assert set(payload["metadata"]) >= {"M", "lambda", "units", "layout", "config"}
    assert payload["metadata"]["M"] == 20000

    report = payload["reports"][0]
    assert set(report) == {"measure", "units", "signed", "lambda", "values", "metadata"}
    assert report["measure"] == "un"
    assert abs(report["values"]["Un_1"] - 0.5 * math.log(2.0)) < 0.03
    assert abs(report["values"]["Un_2"]) < 0.03


def test_bits_and_csv_to_stdout(capsys, pure_unique_files):
    csv_path, layout_path = pure_unique_files
    capsys.readouterr()
    code = main(["estimate", "--input", str(csv_path), "--layout", str(layout_path),
                 "--measures", "mi", "--units", "bits", "--format", "csv"], environ={})
    assert code == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "measure,label,value,units,lambda,M"
    measure, label, value, units, lam, m = lines[1].split(",")
    assert (measure, units, m) == ("mi", "bits", "20000")
    assert abs(float(value) - 0.5) < 0.05


def test_redundancy_needs_two_sources(tmp_path, capsys):
    csv_path = tmp_path / "three.csv"
    assert main(["sample", "--system", "scaling", "--sources", "3", "--samples", "200",
                 "--out", str(csv_path)], environ={}) == EXIT_OK
    code = main(["estimate", "--input", str(csv_path), "--layout", str(tmp_path / "three.layout.json"),
                 "--measures", "red"], environ={})
    assert code == EXIT_INPUT_ERROR
    assert "exactly two sources" in capsys.readouterr().err


def test_rank_deficient_input_needs_ridge(rank_deficient_files, capsys):
    csv_path, layout_path = rank_deficient_files
    base = ["estimate", "--input", str(csv_path), "--layout", str(layout_path), "--measures", "tse"]
    assert main(base, environ={}) == EXIT_NUMERICAL_FAILURE
    assert "--ridge" in capsys.readouterr().err
    assert main(base + ["--ridge", "1e-4"], environ={}) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["metadata"]["lambda"] == 1e-4
    assert payload["reports"][0]["lambda"] == 1e-4


def test_estimate_requires_input_and_layout():
    assert main(["estimate", "--measures", "tse"], environ={}) == EXIT_INPUT_ERROR


def test_bad_csv_is_an_input_error(tmp_path, pure_unique_files):
    _, layout_path = pure_unique_files
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,4\n", encoding="utf-8")
    assert main(["estimate", "--input", str(bad), "--layout", str(layout_path)], environ={}) == EXIT_INPUT_ERROR


# ============================================================================
# CONFIGURATION
# ============================================================================

def test_unknown_environment_variable(pure_unique_files):
    csv_path, layout_path = pure_unique_files
    argv = ["estimate", "--input", str(csv_path), "--layout", str(layout_path)]
    assert main(argv, environ={"GPID_BOGUS": "1"}) == EXIT_INPUT_ERROR
    assert main(argv, environ={"GPID_FORMAT": "xml"}) == EXIT_INPUT_ERROR
    assert main(argv, environ={"GPID_THREADS": "zero"}) == EXIT_INPUT_ERROR


def test_env_overrides():
    assert env_overrides({"GPID_SEED": "7", "GPID_HEADER": "yes", "HOME": "/root"}) == {"seed": 7, "header": True}
    with pytest.raises(InputError):
        env_overrides({"GPID_HEADER": "maybe"})


def test_every_option_has_an_environment_variable():
    parser = build_parser()
    subcommands = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    dests = {
        action.dest
        for sub in subcommands.choices.values()
        for action in sub._actions
        if action.option_strings and action.dest not in ("help", "inject_fault")
    }
    assert dests == set(ENV_OPTIONS)


def test_validate_configured_from_environment(tmp_path):
    environ = {
        "GPID_SYSTEM": "five-source",
        "GPID_FAMILIES": "C2,U3",
        "GPID_SYSTEMS": "3",
        "GPID_SAMPLES": "20000",
        "GPID_LOG_FILE": str(tmp_path / "v.log"),
    }
    assert main(["validate"], environ=environ) == EXIT_OK
    assert "2 (system, family) cases" in (tmp_path / "v.log").read_text(encoding="utf-8")
    assert env_overrides({"GPID_BUDGET": "2.5", "GPID_N_GRID": "5,10"}) == {"budget": 2.5, "n_grid": "5,10"}


def test_seed_from_environment_and_flag_precedence(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    argv = ["sample", "--system", "five-source", "--samples", "50"]
    assert main(argv + ["--seed", "5", "--out", str(a)], environ={}) == EXIT_OK
    assert main(argv + ["--out", str(b)], environ={"GPID_SEED": "5"}) == EXIT_OK
    assert main(argv + ["--seed", "5", "--out", str(c)], environ={"GPID_SEED": "9"}) == EXIT_OK
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_parse_measures():
    requests = parse_measures("red, un:2, se:3, syn, tse, spectrum, mi", subset=(1, 2))
    assert [r.measure for r in requests] == [
        Measure.RED, Measure.UN, Measure.SE, Measure.SYN, Measure.TSE, Measure.SPECTRUM, Measure.MI,
    ]
    assert requests[1].source == 2
    assert requests[2].order == 3
    assert requests[3].subset == (1, 2)
    for bad in ("se", "foo", "un:x", ""):
        with pytest.raises(InputError):
            parse_measures(bad)


# ============================================================================
# BENCHMARK, VALIDATE, SAMPLE
# ============================================================================

def test_benchmark_rerun_is_byte_identical(tmp_path):
    argv = ["benchmark", "recovery", "--trials", "2", "--samples", "100", "--seed", "4",
            "--threads", "1", "--out", str(tmp_path)]
    assert main(argv, environ={}) == EXIT_OK
    first = {name: (tmp_path / name).read_bytes()
             for name in ("recovery_trials.csv", "recovery_summary.csv", "recovery_summary.json")}
    assert main(argv, environ={}) == EXIT_OK
    for name, content in first.items():
        assert (tmp_path / name).read_bytes() == content, name

    summary = json.loads(first["recovery_summary.json"])
    assert summary["metadata"]["config"]["seed"] == 4
    assert summary["metadata"]["config"]["command"] == "benchmark"


def test_validate_exit_codes(tmp_path, capsys):
    log_file = tmp_path / "validation.log"
    argv = ["validate", "--systems", "3", "--samples", "20000", "--log-file", str(log_file)]
    assert main(argv, environ={}) == EXIT_OK
    assert "checks passed" in log_file.read_text(encoding="utf-8")
    assert main(argv + ["--inject-fault"], environ={}) == EXIT_VALIDATION_FAILED
    assert "CONDITIONAL-COPY VALIDATION SUITE" in capsys.readouterr().out


def test_validate_families_need_a_system():
    assert main(["validate", "--families", "C2"], environ={}) == EXIT_INPUT_ERROR


def test_sample_writes_header_and_sidecar(tmp_path):
    out = tmp_path / "five.csv"
    assert main(["sample", "--system", "five-source", "--samples", "10", "--header",
                 "--out", str(out)], environ={}) == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "T_1,T_2,S1_1,S2_1,S3_1,S4_1,S5_1"
    assert len(lines) == 11
    layout = json.loads((tmp_path / "five.layout.json").read_text(encoding="utf-8"))
    assert layout == {"target_dim": 2, "source_dims": [1, 1, 1, 1, 1]}


def test_sample_needs_system_and_out(tmp_path):
    assert main(["sample", "--out", str(tmp_path / "x.csv")], environ={}) == EXIT_INPUT_ERROR
    assert main(["sample", "--system", "pure-unique"], environ={}) == EXIT_INPUT_ERROR


def test_estimate_json_matches_published_schema(tmp_path, pure_unique_files):
    csv_path, layout_path = pure_unique_files
    report_path = tmp_path / "report.json"
    code = main(["estimate", "--input", str(csv_path), "--layout", str(layout_path),
                 "--measures", "red,un,se:2,syn,tse,spectrum,mi", "--units", "bits",
                 "--out", str(report_path)], environ={})
    assert code == EXIT_OK
    schema = json.loads((Path(__file__).parent / "measure_report.schema.json").read_text(encoding="utf-8"))
    Draft7Validator.check_schema(schema)
    payload = json.loads(report_path.read_text(encoding="utf-8"))
    errors = [e.message for e in Draft7Validator(schema).iter_errors(payload)]
    assert errors == []
    assert len(payload["reports"]) == 7


def test_benchmark_two_source_writes_the_table(tmp_path):
    argv = ["benchmark", "two-source", "--trials", "3", "--samples", "200", "--out", str(tmp_path)]
    assert main(argv, environ={}) == EXIT_OK
    lines = (tmp_path / "two-source_table.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "config,Red,Un_1,Un_2,Syn"
    assert [line.split(",")[0] for line in lines[1:]] == [
        "pure-redundancy", "pure-unique", "pure-synergy", "mixed-correlated", "mixed-asymmetric",
    ]
