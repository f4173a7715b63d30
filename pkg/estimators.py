"""
Closed-form Gaussian PID measures.
Two-source redundancy, per-source unique information, K-th order synergistic
effects, the synergy spectrum, narrow synergy (global or restricted to a
source subset) and the total synergistic effect, all as log-determinant
ratios in nats, plus the ridge-regularized entry point.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

from copy_identity import build_gamma, psi_schur
from covariance_model import (
    InputError,
    JointCovariance,
    NumericalFailure,
    SubsetFamily,
    cholesky_factor,
    cholesky_logdet,
    extract_block,
    restrict_sources,
    ridge,
)

logger = logging.getLogger(__name__)

# Refuse the full spectrum from this many sources on unless overridden
DEFAULT_SPECTRUM_CAP = 15

NATS_PER_BIT = math.log(2.0)

T = TypeVar("T")
R = TypeVar("R")


class Measure(str, Enum):
    RED = "red"
    UN = "un"
    SE = "se"
    SYN = "syn"
    TSE = "tse"
    SPECTRUM = "spectrum"
    MI = "mi"


SIGNED_MEASURES = {Measure.SE, Measure.SYN, Measure.TSE, Measure.SPECTRUM}


@dataclass(frozen=True)
class MeasureRequest:
    """
    What to estimate.

    Attributes:
        measure: Which measure
        source: Source index for `un` (None = every source)
        order: K for `se`
        subset: Source subset for `syn` and `mi` (None = all sources)
    """

    measure: Measure
    source: Optional[int] = None
    order: Optional[int] = None
    subset: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class MeasureReport:
    """Named measure values in nats plus estimation metadata."""

    measure: Measure
    labels: Tuple[str, ...]
    values: Tuple[float, ...]
    lam: float = 0.0
    signed: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.labels) != len(self.values):
            raise InputError("labels and values must have the same length")

    def as_dict(self, units: str = "nats") -> dict:
        scale = 1.0 if units == "nats" else 1.0 / NATS_PER_BIT
        return {
            "measure": self.measure.value,
            "units": units,
            "signed": self.signed,
            "lambda": self.lam,
            "values": {label: value * scale for label, value in zip(self.labels, self.values)},
            "metadata": dict(self.metadata),
        }


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Order-preserving map, on a thread pool when threads > 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ============================================================================
# BUILDING BLOCKS
# ============================================================================

def log_det_psi(cov: JointCovariance, fam: SubsetFamily) -> float:
    """log det Psi_A."""
    aux = psi_schur(cov, fam)
    return cholesky_logdet(aux.psi, context=f"Psi for family {fam.label}")


def conditional_entropy(cov: JointCovariance, fam: SubsetFamily) -> float:
    """h(T | Y_A) in nats, including the (2 pi e)^{d_T} constant."""
    d_t = cov.layout.target_dim
    return 0.5 * (d_t * math.log(2.0 * math.pi * math.e) + log_det_psi(cov, fam))


def target_entropy(cov: JointCovariance) -> float:
    """h(T) in nats."""
    d_t = cov.layout.target_dim
    return 0.5 * (d_t * math.log(2.0 * math.pi * math.e) + cholesky_logdet(cov.target_cov, context="Sigma_T"))


def mutual_information(cov: JointCovariance, subset: Optional[Sequence[int]] = None) -> float:
    """
    I(S_A; T) = h(T) - h(T | S_A); subset defaults to all sources.

    A single-subset family has Psi = Cov(T | S_A), so the conditional entropy
    comes from the same copy machinery as every other measure.
    """
    sources = tuple(range(1, cov.n_sources + 1)) if subset is None else tuple(subset)
    return target_entropy(cov) - conditional_entropy(cov, SubsetFamily.single(sources))


def _require_sources(cov: JointCovariance, minimum: int = 2) -> int:
    n = cov.n_sources
    if n < minimum:
        raise InputError(f"this measure needs at least {minimum} sources, layout has {n}")
    return n


# ============================================================================
# MEASURES
# ============================================================================

def redundancy_two_source(cov: JointCovariance) -> float:
    """Red = 1/2 log(det Sigma_11 det Sigma_22 / det Gamma_U1), two sources only."""
    if cov.n_sources != 2:
        raise InputError(
            f"redundancy is defined for exactly two sources, layout has {cov.n_sources}"
        )
    gamma = build_gamma(cov, SubsetFamily.unique_pair(2, 1))
    return 0.5 * (
        cholesky_logdet(extract_block(cov, 1, 1), context="Sigma_11")
        + cholesky_logdet(extract_block(cov, 2, 2), context="Sigma_22")
        - cholesky_logdet(gamma, context="Gamma_U1")
    )


def unique_information(cov: JointCovariance, i: int) -> float:
    """Un_i = 1/2 log(det Psi_{V_i} / det Psi_{U_i})."""
    n = _require_sources(cov)
    if i < 1 or i > n:
        raise InputError(f"source index {i} out of range 1..{n}")
    return 0.5 * (
        log_det_psi(cov, SubsetFamily.complement(n, i))
        - log_det_psi(cov, SubsetFamily.unique_pair(n, i))
    )


def synergistic_effect(cov: JointCovariance, k: int) -> float:
    """
    SE_K = 1/2 log(det Psi_{C_{K-1}} / det Psi_{C_K}).

    Signed: C_{K-1} and C_K are not nested, so the value may be negative.
    """
    n = _require_sources(cov)
    if k < 2 or k > n:
        raise InputError(f"order K must lie in 2..{n}, got {k}")
    return 0.5 * (
        log_det_psi(cov, SubsetFamily.all_of_size(n, k - 1))
        - log_det_psi(cov, SubsetFamily.all_of_size(n, k))
    )


def narrow_synergy(cov: JointCovariance, subset: Optional[Sequence[int]] = None) -> float:
    """
    Top-order synergistic effect of a source subset.

    The covariance is first restricted to (T, sources in subset); the
    subset defaults to every source.
    """
    if subset is None:
        restricted = cov
    else:
        subset = tuple(sorted(set(int(i) for i in subset)))
        if len(subset) < 2:
            raise InputError(f"narrow synergy needs a subset of size >= 2, got {subset}")
        restricted = restrict_sources(cov, subset)
    n = _require_sources(restricted)
    return synergistic_effect(restricted, n)


def total_synergistic_effect(cov: JointCovariance) -> float:
    """TSE = 1/2 log(det Psi_{C_1} / det Psi_{C_N}), from the two endpoint families only."""
    n = _require_sources(cov)
    return 0.5 * (
        log_det_psi(cov, SubsetFamily.all_of_size(n, 1))
        - log_det_psi(cov, SubsetFamily.all_of_size(n, n))
    )


def synergy_spectrum(
    cov: JointCovariance,
    max_sources: int = DEFAULT_SPECTRUM_CAP,
    allow_large: bool = False,
    threads: int = 1,
) -> Tuple[float, ...]:
    """
    (SE_2, ..., SE_N).

    Each Psi_{C_K} is computed once and shared between adjacent ratios; the
    per-order evaluations are independent and run on `threads` workers.

    Raises:
        InputError: N reaches max_sources and allow_large is False
    """
    n = _require_sources(cov)
    if n >= max_sources and not allow_large:
        raise InputError(
            f"full spectrum for N={n} exceeds the cap (N < {max_sources} sources); "
            f"pass allow_large (--allow-large-spectrum) to force it"
        )
    log_dets = parallel_map(
        lambda k: log_det_psi(cov, SubsetFamily.all_of_size(n, k)),
        range(1, n + 1),
        threads,
    )
    return tuple(0.5 * (log_dets[k - 1] - log_dets[k]) for k in range(1, n))


def subset_synergy_scan(
    cov: JointCovariance, size: int, threads: int = 1
) -> Dict[Tuple[int, ...], float]:
    """Narrow synergy of every source subset of the given size, lexicographic order."""
    n = _require_sources(cov)
    if size < 2 or size > n:
        raise InputError(f"subset size must lie in 2..{n}, got {size}")
    subsets = list(itertools.combinations(range(1, n + 1), size))
    values = parallel_map(lambda s: narrow_synergy(cov, s), subsets, threads)
    return dict(zip(subsets, values))


def decompose_two_source(cov: JointCovariance) -> Dict[str, float]:
    """(Red, Un_1, Un_2, Syn) for a two-source system."""
    return {
        "Red": redundancy_two_source(cov),
        "Un_1": unique_information(cov, 1),
        "Un_2": unique_information(cov, 2),
        "Syn": narrow_synergy(cov),
    }


# ============================================================================
# REPORTING ENTRY POINTS
# ============================================================================

def _fmt(subset: Sequence[int]) -> str:
    return "{" + ",".join(str(i) for i in subset) + "}"


def _evaluate(
    cov: JointCovariance,
    request: MeasureRequest,
    max_sources: int,
    allow_large: bool,
    threads: int,
) -> Tuple[Tuple[str, ...], Tuple[float, ...]]:
    measure = request.measure
    n = cov.n_sources

    if measure is Measure.RED:
        return ("Red",), (redundancy_two_source(cov),)

    if measure is Measure.UN:
        sources = list(range(1, n + 1)) if request.source is None else [request.source]
        values = parallel_map(lambda i: unique_information(cov, i), sources, threads)
        return tuple(f"Un_{i}" for i in sources), tuple(values)

    if measure is Measure.SE:
        if request.order is None:
            raise InputError("measure 'se' needs an order K")
        return (f"SE_{request.order}",), (synergistic_effect(cov, request.order),)

    if measure is Measure.SYN:
        label = "Syn" if request.subset is None else f"Syn{_fmt(request.subset)}"
        return (label,), (narrow_synergy(cov, request.subset),)

    if measure is Measure.TSE:
        return ("TSE",), (total_synergistic_effect(cov),)

    if measure is Measure.SPECTRUM:
        values = synergy_spectrum(cov, max_sources, allow_large, threads)
        return tuple(f"SE_{k}" for k in range(2, n + 1)), values

    if measure is Measure.MI:
        label = "MI" if request.subset is None else f"MI{_fmt(request.subset)}"
        return (label,), (mutual_information(cov, request.subset),)

    raise InputError(f"unknown measure {measure!r}")


def estimate(
    cov: JointCovariance,
    request: MeasureRequest,
    max_sources: int = DEFAULT_SPECTRUM_CAP,
    allow_large: bool = False,
    threads: int = 1,
    lam: float = 0.0,
) -> MeasureReport:
    """Evaluate one measure request on a covariance as given (no regularization applied here)."""
    start = time.perf_counter()
    labels, values = _evaluate(cov, request, max_sources, allow_large, threads)
    elapsed = time.perf_counter() - start
    return MeasureReport(
        measure=request.measure,
        labels=labels,
        values=tuple(float(v) for v in values),
        lam=float(lam),
        signed=request.measure in SIGNED_MEASURES,
        metadata={
            "layout": cov.layout.summary(),
            "wall_time_seconds": elapsed,
            "threads": int(threads),
        },
    )


def estimate_with_ridge(
    cov: JointCovariance,
    lam: float,
    request: MeasureRequest,
    max_sources: int = DEFAULT_SPECTRUM_CAP,
    allow_large: bool = False,
    threads: int = 1,
) -> MeasureReport:
    """
    Evaluate a measure on Sigma + lam I.

    The full joint covariance is factorized first, so a singular Sigma fails
    even when every block the measure touches happens to factorize. lam = 0
    evaluates Sigma unchanged; lam > 0 always succeeds on symmetric PSD input.

    Raises:
        NumericalFailure: lam = 0 and the covariance (or a Schur complement) is not PD
    """
    regularized = ridge(cov, lam)
    try:
        cholesky_factor(regularized.sigma, context="joint covariance")
        return estimate(regularized, request, max_sources, allow_large, threads, lam=lam)
    except NumericalFailure as exc:
        if lam > 0:
            raise
        raise NumericalFailure(
            f"{exc}; the covariance is singular or near-singular, retry with a ridge "
            f"(e.g. --ridge 1e-6)",
            pivot=exc.pivot,
            context=exc.context,
        ) from exc
