"""
Independent checks of the conditional-copy identity.
Builds the linear-Gaussian generative model of a subset family, estimates
Psi_A by Monte Carlo from it, diagnoses the residual ordering behind the
sign of SE_K, and runs the full validation suite behind `cli.py validate`.
"""

import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy.linalg import block_diag

from copy_identity import (
    block_bounds,
    build_gamma,
    build_lambda,
    psi_schur,
    psi_woodbury,
    regression_blocks,
    schur_from_blocks,
)
from covariance_model import (
    BlockLayout,
    InputError,
    JointCovariance,
    NumericalFailure,
    PIDError,
    SubsetFamily,
    blockwise_transform,
    cholesky_factor,
    cholesky_logdet,
    cholesky_solve,
    extract_block,
    permute_sources,
    schur_conditional,
    stack_independent,
)
from empirical_data import SampleMatrix, empirical_covariance, make_rng
from estimators import (
    synergy_spectrum,
    total_synergistic_effect,
    unique_information,
)

logger = logging.getLogger(__name__)

# Monte-Carlo tolerance constant: tol = c * sqrt((d_T + D_A) / M)
ORACLE_TOLERANCE_CONSTANT = 5.0

DEFAULT_SYSTEMS = 50
DEFAULT_MC_SAMPLES = 100_000

DUAL_PATH_TOLERANCE = 1e-9
RECONSTRUCTION_TOLERANCE = 1e-10
TELESCOPING_TOLERANCE = 1e-10
AFFINE_TOLERANCE = 1e-8
PERMUTATION_TOLERANCE = 1e-10
ADDITIVITY_TOLERANCE = 1e-9
SIGN_TOLERANCE = 1e-10

# Relative jitter added before the Cholesky PSD test of Psi differences
PSD_JITTER = 1e-10


class DiagnosticLogger:
    """Timestamped section / success / warning / error reporter for validation runs."""

    def __init__(self, stream: Optional[TextIO] = None, log_file: Optional[Path] = None):
        self.stream = stream if stream is not None else sys.stdout
        self.log_file = Path(log_file) if log_file else None
        self.start_time = time.time()
        self.counts = {"OK": 0, "WARN": 0, "ERROR": 0}

    def log(self, message: str, level: str = "INFO"):
        timestamp = time.time() - self.start_time
        log_line = f"[{timestamp:8.2f}s] [{level:5s}] {message}"
        print(log_line, file=self.stream)
        if level in self.counts:
            self.counts[level] += 1

        if self.log_file is not None:
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(log_line + "\n")

    def section(self, title: str):
        separator = "=" * 80
        self.log("")
        self.log(separator)
        self.log(f"  {title}")
        self.log(separator)

    def success(self, message: str):
        self.log(f"✅ {message}", "OK")

    def warning(self, message: str):
        self.log(f"⚠️  {message}", "WARN")

    def error(self, message: str):
        self.log(f"❌ {message}", "ERROR")

    def info(self, message: str):
        self.log(f"ℹ️  {message}", "INFO")

    def test(self, test_name: str):
        self.log(f"🧪 Test: {test_name}", "TEST")


# ============================================================================
# GENERATIVE MODEL
# ============================================================================

@dataclass(frozen=True)
class GenerativeCopyModel:
    """
    Linear-Gaussian representation of a conditional-copy family.

    T ~ N(0, Sigma_T) and, independently per subset, Y_a = B_a T + xi_a
    with xi_a ~ N(0, Delta_a).
    """

    family: SubsetFamily
    sigma_t: np.ndarray = field(repr=False)
    regressions: Tuple[np.ndarray, ...] = field(repr=False)
    residuals: Tuple[np.ndarray, ...] = field(repr=False)

    @property
    def stacked_regression(self) -> np.ndarray:
        return np.vstack(self.regressions)

    @property
    def block_sizes(self) -> List[int]:
        return [b.shape[0] for b in self.regressions]

    def gamma(self) -> np.ndarray:
        """block_diag(Delta_a) + B Sigma_T B^T."""
        b = self.stacked_regression
        return block_diag(*self.residuals) + b @ self.sigma_t @ b.T

    def joint_covariance(self) -> np.ndarray:
        """Covariance of (T, Y_A) implied by the generative equations."""
        b = self.stacked_regression
        cross = b @ self.sigma_t
        return np.block([[self.sigma_t, cross.T], [cross, self.gamma()]])

    def layout(self) -> BlockLayout:
        """One block per subset copy."""
        return BlockLayout(self.sigma_t.shape[0], tuple(self.block_sizes))

    def sample(self, m: int, seed: int) -> SampleMatrix:
        """M joint draws of (T, Y_1, ..., Y_m)."""
        rng = make_rng(seed)
        d_t = self.sigma_t.shape[0]
        t = rng.standard_normal((m, d_t)) @ cholesky_factor(self.sigma_t, "Sigma_T").T
        blocks = [t]
        for a, (b, delta) in enumerate(zip(self.regressions, self.residuals)):
            factor = cholesky_factor(delta, context=f"Delta for subset {self.family.subsets[a]}")
            xi = rng.standard_normal((m, delta.shape[0])) @ factor.T
            blocks.append(t @ b.T + xi)
        return SampleMatrix(self.layout(), np.hstack(blocks))


def generative_params(cov: JointCovariance, fam: SubsetFamily) -> GenerativeCopyModel:
    """B_a = Sigma_{A_a T} Sigma_T^{-1} and Delta_a per subset, in family order."""
    regressions, residuals = regression_blocks(cov, fam)
    return GenerativeCopyModel(
        family=fam,
        sigma_t=cov.target_cov,
        regressions=tuple(regressions),
        residuals=tuple(residuals),
    )


def reconstruction_error(model: GenerativeCopyModel, cov: JointCovariance) -> float:
    """max_a max |B_a Sigma_T - Sigma_{A_a T}|."""
    worst = 0.0
    for subset, b in zip(model.family.subsets, model.regressions):
        diff = b @ model.sigma_t - extract_block(cov, subset, "T")
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def oracle_tolerance(target_dim: int, aux_dim: int, m: int, c: float = ORACLE_TOLERANCE_CONSTANT) -> float:
    return c * math.sqrt((target_dim + aux_dim) / m)


def mc_psi(cov: JointCovariance, fam: SubsetFamily, m: int, seed: int) -> np.ndarray:
    """
    Monte-Carlo estimate of Psi_A.

    Samples (T, Y_A) from the generative model and returns the empirical
    Schur complement Sigma_T - Sigma_TY Sigma_YY^{-1} Sigma_YT.

    Raises:
        InputError: M < d_T + D_A + 2
        NumericalFailure: the empirical Sigma_YY is singular
    """
    d_t = cov.layout.target_dim
    aux_dim = fam.dimension(cov.layout)
    if m < d_t + aux_dim + 2:
        raise InputError(f"Monte-Carlo oracle needs M >= {d_t + aux_dim + 2}, got {m}")
    model = generative_params(cov, fam)
    joint = empirical_covariance(model.sample(m, seed))
    return schur_conditional(joint, range(1, fam.m + 1))


def relative_frobenius(estimate: np.ndarray, reference: np.ndarray) -> float:
    return float(np.linalg.norm(estimate - reference) / max(np.linalg.norm(reference), 1e-300))


# ============================================================================
# RESIDUAL ORDERING
# ============================================================================

@dataclass(frozen=True)
class OrderingDiagnostic:
    """Whether Psi_{C_{K-1}} - Psi_{C_K} is PSD, and the sign of SE_K."""

    k: int
    ordering_holds: bool
    synergistic_effect: float
    min_eigenvalue: float
    consistent: bool


def check_psd_ordering(cov: JointCovariance, k: int, strict: bool = False) -> OrderingDiagnostic:
    """
    Residual-ordering diagnostic for order K.

    PSD is tested by a Cholesky factorization of the difference plus a
    jitter of PSD_JITTER times its scale. An ordering that holds with
    SE_K < -1e-10 is flagged as inconsistent and logged.

    Raises:
        NumericalFailure: strict is True and the record is inconsistent
    """
    n = cov.n_sources
    if k < 2 or k > n:
        raise InputError(f"order K must lie in 2..{n}, got {k}")
    psi_prev = psi_schur(cov, SubsetFamily.all_of_size(n, k - 1)).psi
    psi_k = psi_schur(cov, SubsetFamily.all_of_size(n, k)).psi
    diff = psi_prev - psi_k

    scale = max(float(np.max(np.abs(psi_prev))), 1e-300)
    try:
        cholesky_factor(diff + PSD_JITTER * scale * np.eye(diff.shape[0]))
        holds = True
    except NumericalFailure:
        holds = False

    se = 0.5 * (cholesky_logdet(psi_prev, "Psi_C(K-1)") - cholesky_logdet(psi_k, "Psi_C(K)"))
    consistent = (not holds) or se >= -SIGN_TOLERANCE
    if not consistent:
        logger.warning("residual ordering holds at K=%d but SE_K=%.3e is negative", k, se)
        if strict:
            raise NumericalFailure(
                f"residual ordering holds at K={k} but SE_K={se:.3e} is below -{SIGN_TOLERANCE:g}",
                context=f"ordering K={k}",
            )

    return OrderingDiagnostic(
        k=k,
        ordering_holds=holds,
        synergistic_effect=float(se),
        min_eigenvalue=float(np.min(np.linalg.eigvalsh(diff))),
        consistent=consistent,
    )


# ============================================================================
# RANDOM SYSTEMS
# ============================================================================

def random_system(
    rng: np.random.Generator,
    target_dim: int,
    source_dims: Sequence[int],
    offset: float = 0.5,
) -> JointCovariance:
    """Random PD system Sigma = A A^T / dim + offset * I."""
    layout = BlockLayout(target_dim, tuple(source_dims))
    dim = layout.total_dim
    a = rng.standard_normal((dim, dim))
    sigma = a @ a.T / dim + offset * np.eye(dim)
    return JointCovariance(layout, 0.5 * (sigma + sigma.T))


def random_layout_system(rng: np.random.Generator, max_sources: int = 5, max_dim: int = 2) -> JointCovariance:
    n = int(rng.integers(2, max_sources + 1))
    target_dim = int(rng.integers(1, max_dim + 1))
    source_dims = [int(d) for d in rng.integers(1, max_dim + 1, size=n)]
    return random_system(rng, target_dim, source_dims)


def _orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _well_conditioned_map(rng: np.random.Generator, d: int) -> np.ndarray:
    # singular values in [0.1, 10]
    scales = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=d))
    return _orthogonal(rng, d) @ np.diag(scales) @ _orthogonal(rng, d)


def random_blockwise_transform(
    rng: np.random.Generator, layout: BlockLayout
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Invertible per-block maps with condition number at most 100."""
    target_map = _well_conditioned_map(rng, layout.target_dim)
    source_maps = [_well_conditioned_map(rng, d) for d in layout.source_dims]
    return target_map, source_maps


def standard_families(n_sources: int) -> List[SubsetFamily]:
    """Every C_K plus every U_i and V_i."""
    families = [SubsetFamily.all_of_size(n_sources, k) for k in range(1, n_sources + 1)]
    for i in range(1, n_sources + 1):
        families.append(SubsetFamily.unique_pair(n_sources, i))
        families.append(SubsetFamily.complement(n_sources, i))
    return families


def parse_family(label: str, n_sources: int) -> SubsetFamily:
    """'C2', 'U1' or 'V3' for an N-source system."""
    label = label.strip().upper()
    if len(label) < 2 or label[0] not in "CUV" or not label[1:].isdigit():
        raise InputError(f"family label must look like C2, U1 or V3, got {label!r}")
    index = int(label[1:])
    if label[0] == "C":
        return SubsetFamily.all_of_size(n_sources, index)
    if label[0] == "U":
        return SubsetFamily.unique_pair(n_sources, index)
    return SubsetFamily.complement(n_sources, index)


# ============================================================================
# FAULT INJECTION
# ============================================================================

def faulty_psi(cov: JointCovariance, fam: SubsetFamily) -> np.ndarray:
    """Psi_A with the sign of every off-diagonal Gamma block flipped."""
    lam = build_lambda(cov, fam)
    gamma = build_gamma(cov, fam)
    flipped = -gamma
    for lo, hi in block_bounds(cov, fam):
        flipped[lo:hi, lo:hi] = gamma[lo:hi, lo:hi]
    return schur_from_blocks(cov.target_cov, lam, flipped, context=f"faulty Gamma for {fam.label}")


# ============================================================================
# VALIDATION SUITE
# ============================================================================

@dataclass
class CheckResult:
    """Outcome of one validation check; `error` is the worst measured error."""

    name: str
    passed: bool
    error: float
    tolerance: float
    cases: int = 0
    detail: str = ""


def _run_cases(
    name: str,
    cases: Sequence,
    measure: Callable[[object], float],
    tolerance: float,
    diag: DiagnosticLogger,
) -> CheckResult:
    """Apply `measure` to every case; a PIDError counts as a failed case."""
    diag.test(name)
    worst = 0.0
    failures = []
    for index, case in enumerate(cases):
        try:
            error = float(measure(case))
        except PIDError as exc:
            failures.append(f"case {index}: {exc}")
            worst = math.inf
            continue
        if not error <= tolerance:
            failures.append(f"case {index}: error {error:.3e}")
        worst = max(worst, error)

    passed = not failures
    result = CheckResult(name, passed, worst, tolerance, len(cases), "; ".join(failures[:3]))
    summary = f"{name}: worst error {worst:.3e} (tolerance {tolerance:.1e}) over {len(cases)} cases"
    if passed:
        diag.success(summary)
    else:
        diag.error(f"{summary} -- {result.detail}")
    return result


def _dual_path_error(psi_fn: Callable[[JointCovariance, SubsetFamily], np.ndarray]):
    def measure(case):
        cov, fam = case
        return relative_frobenius(psi_fn(cov, fam), psi_woodbury(cov, fam))
    return measure


def _woodbury_precision_error(case) -> float:
    cov, fam = case
    model = generative_params(cov, fam)
    d_t = cov.layout.target_dim
    precision = cholesky_solve(cholesky_factor(model.sigma_t, "Sigma_T"), np.eye(d_t))
    for b, delta in zip(model.regressions, model.residuals):
        precision = precision + b.T @ cholesky_solve(cholesky_factor(delta, "Delta"), b)
    psi = psi_schur(cov, fam).psi
    psi_inverse = cholesky_solve(cholesky_factor(psi, "Psi"), np.eye(d_t))
    return relative_frobenius(precision, psi_inverse)


def _reconstruction_error(case) -> float:
    cov, fam = case
    model = generative_params(cov, fam)
    gamma = build_gamma(cov, fam)
    scale = max(float(np.max(np.abs(gamma))), 1.0)
    return max(
        float(np.max(np.abs(model.gamma() - gamma))) / scale,
        reconstruction_error(model, cov) / scale,
    )


def _telescoping_error(cov: JointCovariance) -> float:
    return abs(sum(synergy_spectrum(cov)) - total_synergistic_effect(cov))


def _measure_vector(cov: JointCovariance) -> np.ndarray:
    values = list(synergy_spectrum(cov))
    values.append(total_synergistic_effect(cov))
    values += [unique_information(cov, i) for i in range(1, cov.n_sources + 1)]
    return np.array(values)


def run_validation_suite(
    seed: int = 0,
    n_systems: int = DEFAULT_SYSTEMS,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    system: Optional[JointCovariance] = None,
    families: Optional[Sequence[str]] = None,
    inject_fault: bool = False,
    diag: Optional[DiagnosticLogger] = None,
) -> List[CheckResult]:
    """
    Run every validation check and report through a DiagnosticLogger.

    Args:
        seed: Seed of the random systems and Monte-Carlo draws
        n_systems: Random systems per structural check
        mc_samples: M for the Monte-Carlo oracle
        system: Fixed system for the dual-path and oracle checks (random if None)
        families: Family labels (C2, U1, V3) on `system`; all standard families if None
        inject_fault: Replace the Schur path by a sign-flipped Gamma (canary)
        diag: Reporter; stdout if None

    Returns:
        One CheckResult per check
    """
    diag = diag or DiagnosticLogger()
    rng = make_rng(seed)
    results = []

    random_systems = [random_layout_system(rng) for _ in range(n_systems)]
    if system is not None:
        labels = families or [f.label for f in standard_families(system.n_sources)]
        family_cases = [(system, parse_family(label, system.n_sources)) for label in labels]
    else:
        family_cases = [(cov, fam) for cov in random_systems for fam in standard_families(cov.n_sources)]

    diag.section("CONDITIONAL-COPY IDENTITY")
    diag.info(f"seed {seed}, {len(family_cases)} (system, family) cases")
    if inject_fault:
        diag.warning("fault injection on: Gamma off-diagonal blocks sign-flipped in the Schur path")
    schur_path = faulty_psi if inject_fault else (lambda cov, fam: psi_schur(cov, fam).psi)

    results.append(_run_cases("dual path (Schur vs Woodbury)", family_cases,
                              _dual_path_error(schur_path), DUAL_PATH_TOLERANCE, diag))
    results.append(_run_cases("Woodbury precision identity", family_cases,
                              _woodbury_precision_error, DUAL_PATH_TOLERANCE, diag))
    results.append(_run_cases("Gamma reconstruction", family_cases,
                              _reconstruction_error, RECONSTRUCTION_TOLERANCE, diag))

    diag.section("MONTE-CARLO ORACLE")
    if system is not None:
        mc_cases = family_cases
    else:
        small = [cov for cov in random_systems if cov.layout.total_dim <= 6]
        mc_cases = [(cov, SubsetFamily.all_of_size(cov.n_sources, 1)) for cov in small[:3]]
    worst_tol = max(
        (oracle_tolerance(cov.layout.target_dim, fam.dimension(cov.layout), mc_samples)
         for cov, fam in mc_cases),
        default=0.0,
    )
    diag.info(f"M = {mc_samples}, tolerance c*sqrt((d_T + D)/M) with c = {ORACLE_TOLERANCE_CONSTANT}")

    def mc_error(case):
        cov, fam = case
        reference = schur_path(cov, fam)
        return relative_frobenius(mc_psi(cov, fam, mc_samples, seed), reference)

    results.append(_run_cases("Monte-Carlo oracle", mc_cases, mc_error, worst_tol, diag))

    diag.section("STRUCTURAL PROPERTIES")
    scalar_systems = [
        random_system(rng, 1, [1] * int(rng.integers(2, 9))) for _ in range(n_systems)
    ]
    results.append(_run_cases("telescoping sum of SE_K equals TSE", scalar_systems,
                              _telescoping_error, TELESCOPING_TOLERANCE, diag))

    def affine_error(cov):
        target_map, source_maps = random_blockwise_transform(rng, cov.layout)
        moved = blockwise_transform(cov, target_map, source_maps)
        return float(np.max(np.abs(_measure_vector(moved) - _measure_vector(cov))))

    results.append(_run_cases("invariance under blockwise invertible maps", random_systems,
                              affine_error, AFFINE_TOLERANCE, diag))

    def permutation_error(cov):
        n = cov.n_sources
        perm = [int(p) + 1 for p in rng.permutation(n)]
        moved = permute_sources(cov, perm)
        invariant = abs(total_synergistic_effect(moved) - total_synergistic_effect(cov))
        invariant = max(invariant, float(np.max(np.abs(
            np.array(synergy_spectrum(moved)) - np.array(synergy_spectrum(cov))))))
        equivariant = max(
            abs(unique_information(moved, i) - unique_information(cov, perm[i - 1]))
            for i in range(1, n + 1)
        )
        return max(invariant, equivariant)

    results.append(_run_cases("source permutation", random_systems,
                              permutation_error, PERMUTATION_TOLERANCE, diag))

    def additivity_error(cov):
        other = random_system(rng, cov.layout.target_dim, cov.layout.source_dims)
        stacked = stack_independent(cov, other)
        return float(np.max(np.abs(_measure_vector(stacked) - _measure_vector(cov) - _measure_vector(other))))

    results.append(_run_cases("additivity over independent systems", random_systems,
                              additivity_error, ADDITIVITY_TOLERANCE, diag))

    diag.section("RESIDUAL ORDERING")

    def ordering_error(cov):
        worst = 0.0
        for k in range(2, cov.n_sources + 1):
            record = check_psd_ordering(cov, k)
            if not record.consistent:
                worst = max(worst, -record.synergistic_effect)
            if cov.layout.target_dim == 1 and abs(record.synergistic_effect) > 1e-9:
                if record.ordering_holds != (record.synergistic_effect > 0):
                    worst = max(worst, abs(record.synergistic_effect))
        return worst

    ordering_cases = [system] if system is not None else random_systems
    results.append(_run_cases("ordering implies nonnegative SE_K", ordering_cases,
                              ordering_error, SIGN_TOLERANCE, diag))

    passed = sum(r.passed for r in results)
    diag.section("SUMMARY")
    if passed == len(results):
        diag.success(f"{passed}/{len(results)} checks passed")
    else:
        diag.error(f"{len(results) - passed}/{len(results)} checks failed")
    return results
