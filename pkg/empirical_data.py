"""
Sample handling for Gaussian PID estimation.
Empirical covariance, seeded Gaussian sampling, CSV ingestion and the
CSV / JSON / layout-sidecar writers used by the CLI and the benchmarks.
"""

import io
import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from covariance_model import (
    BlockLayout,
    InputError,
    JointCovariance,
    cholesky_factor,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Encodings tried in order when reading a CSV file
CSV_ENCODINGS = ["utf-8", "latin-1", "cp1252"]

# Full round-trip precision for every float written to CSV and JSON
FLOAT_FORMAT = "%.17g"
JSON_FLOAT_FORMAT = "#.17g"
JSON_FLOAT_TAG = "\u0001f17:"
JSON_FLOAT_PATTERN = re.compile(r'"\\u0001f17:([^"]+)"')

LAYOUT_KEYS = {"target_dim", "source_dims"}


@dataclass(frozen=True)
class SampleMatrix:
    """M rows of (T, S_1..S_N) observations."""

    layout: BlockLayout
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise InputError(f"sample data must be 2-D, got {data.ndim}-D")
        if data.shape[1] != self.layout.total_dim:
            raise InputError(
                f"sample data has {data.shape[1]} columns, layout needs {self.layout.total_dim}"
            )
        if data.shape[0] < 1:
            raise InputError("sample data has no rows")
        if not np.all(np.isfinite(data)):
            row, col = np.argwhere(~np.isfinite(data))[0]
            raise InputError(f"non-finite value at row {row + 1}, column {col + 1}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]


# ============================================================================
# RANDOM NUMBERS
# ============================================================================

def make_rng(seed: int) -> np.random.Generator:
    """
    The single RNG used everywhere: numpy Generator over the Philox
    counter-based bit generator. Normal variates come from
    Generator.standard_normal (ziggurat).
    """
    return np.random.Generator(np.random.Philox(int(seed)))


def trial_seed(seed: int, trial: int) -> int:
    """Seed of trial `trial` (0-based) of an experiment run with `seed`."""
    return int(seed) + int(trial)


# ============================================================================
# ESTIMATION AND SAMPLING
# ============================================================================

def empirical_covariance(samples: SampleMatrix, ddof: int = 1) -> JointCovariance:
    """
    Column-centered empirical covariance.

    Args:
        samples: Sample matrix with M >= 2 rows
        ddof: 1 for the unbiased 1/(M-1) normalization, 0 for 1/M

    Returns:
        Symmetric PSD joint covariance (PD not guaranteed)
    """
    m = samples.m
    if m < 2:
        raise InputError(f"need at least 2 samples for a covariance, got {m}")
    if ddof not in (0, 1):
        raise InputError(f"ddof must be 0 or 1, got {ddof}")

    centered = samples.data - samples.data.mean(axis=0)
    sigma = centered.T @ centered / (m - ddof)
    return JointCovariance(samples.layout, 0.5 * (sigma + sigma.T))


def sample_gaussian(cov: JointCovariance, m: int, seed: int) -> SampleMatrix:
    """
    M i.i.d. zero-mean draws of N(0, Sigma) as rows Z L^T.

    Deterministic in `seed` (Philox RNG, see make_rng).

    Raises:
        NumericalFailure: Sigma is not positive definite
    """
    if m < 1:
        raise InputError(f"sample count must be >= 1, got {m}")
    factor = cholesky_factor(cov.sigma, context="joint covariance for sampling")
    rng = make_rng(seed)
    z = rng.standard_normal((int(m), cov.layout.total_dim))
    return SampleMatrix(cov.layout, z @ factor.T)


# ============================================================================
# FILES
# ============================================================================

def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write to a temp file in the destination directory, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def column_names(layout: BlockLayout) -> list:
    """T_1..T_dT, then S{i}_{j} for every source coordinate."""
    names = [f"T_{j + 1}" for j in range(layout.target_dim)]
    for i, d in enumerate(layout.source_dims, start=1):
        names += [f"S{i}_{j + 1}" for j in range(d)]
    return names


def load_layout(path: PathLike) -> BlockLayout:
    """Read a layout sidecar {"target_dim": t, "source_dims": [d_1, ..., d_N]}."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read layout file {path}: {e}") from e
    return layout_from_dict(raw)


def layout_from_dict(raw: dict) -> BlockLayout:
    if not isinstance(raw, dict):
        raise InputError("layout must be a JSON object")
    unknown = set(raw) - LAYOUT_KEYS
    missing = LAYOUT_KEYS - set(raw)
    if unknown:
        raise InputError(f"unknown layout keys: {', '.join(sorted(unknown))}")
    if missing:
        raise InputError(f"missing layout keys: {', '.join(sorted(missing))}")
    if not isinstance(raw["source_dims"], list):
        raise InputError("source_dims must be a list of positive integers")
    return BlockLayout(raw["target_dim"], tuple(raw["source_dims"]))


def write_layout(layout: BlockLayout, path: PathLike) -> Path:
    payload = {"target_dim": layout.target_dim, "source_dims": list(layout.source_dims)}
    return atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def _parse_cell(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return float("nan")


def load_csv(path: PathLike, layout: BlockLayout, header: bool = False) -> SampleMatrix:
    """
    Parse a comma-separated sample file.

    Args:
        path: CSV file, columns target first then sources in layout order
        layout: Block layout of the columns
        header: True if the first line is a header row

    Returns:
        SampleMatrix with at least two rows

    Raises:
        InputError: unreadable file, column-count mismatch, or unparseable
            numerics (the message names the 1-based data row and column)
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e

    content = None
    for encoding in CSV_ENCODINGS:
        try:
            content = raw.decode(encoding)
            break
        except UnicodeDecodeError:
            continue
    if content is None:
        raise InputError(f"cannot decode {path}")

    try:
        df = pd.read_csv(
            io.StringIO(content),
            sep=",",
            header=0 if header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError as e:
        raise InputError(f"{path} contains no data") from e
    except pd.errors.ParserError as e:
        raise InputError(f"{path}: malformed CSV ({e})") from e

    if df.shape[1] != layout.total_dim:
        raise InputError(
            f"{path}: row 1 has {df.shape[1]} columns, layout needs {layout.total_dim}"
        )

    values = np.empty(df.shape, dtype=float)
    for col in range(df.shape[1]):
        column = df.iloc[:, col].fillna("").str.strip()
        try:
            parsed = column.astype(float).to_numpy()
        except ValueError:
            parsed = np.array([_parse_cell(cell) for cell in column], dtype=float)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            row = int(bad[0])
            raise InputError(
                f"{path}: unparseable value {column.iloc[row]!r} at row {row + 1}, column {col + 1}"
            )
        values[:, col] = parsed

    if values.shape[0] < 2:
        raise InputError(f"{path}: need at least 2 data rows, got {values.shape[0]}")

    logger.debug("loaded %d x %d samples from %s", values.shape[0], values.shape[1], path)
    return SampleMatrix(layout, values)


def write_csv(samples: SampleMatrix, path: PathLike, header: bool = True) -> Path:
    """Write samples with 17 significant digits; optional header row of column names."""
    df = pd.DataFrame(samples.data, columns=column_names(samples.layout))
    return write_table_csv(df, path, header=header)


def write_table_csv(df: pd.DataFrame, path: PathLike, header: bool = True) -> Path:
    text = df.to_csv(index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)


def _tag_floats(value):
    if isinstance(value, dict):
        return {k: _tag_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_tag_floats(v) for v in value]
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise ValueError(f"out of range float value {value!r} is not JSON compliant")
        return f"{JSON_FLOAT_TAG}{float(value):{JSON_FLOAT_FORMAT}}"
    return value


def dumps_json(payload: dict) -> str:
    """Key-sorted, indented JSON with every float printed to 17 significant digits."""
    text = json.dumps(_tag_floats(payload), indent=2, sort_keys=True, allow_nan=False)
    return JSON_FLOAT_PATTERN.sub(r"\1", text)


def write_json(payload: dict, path: PathLike) -> Path:
    return atomic_write_text(path, dumps_json(payload) + "\n")


def read_json(path: PathLike) -> Optional[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
