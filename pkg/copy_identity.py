"""
Conditional-copy covariance identity.
From a joint covariance and a subset family, builds the cross-covariance
Lambda_A, the auxiliary covariance Gamma_A, the joint covariance of
(T, Y_A) and the residual Psi_A = Cov(T | Y_A), with an independent
Woodbury evaluation path.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from covariance_model import (
    TARGET,
    JointCovariance,
    NumericalFailure,
    SubsetFamily,
    cholesky_factor,
    cholesky_solve,
    conditional_covariance,
    extract_block,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuxiliarySystem:
    """Lambda_A, Gamma_A and Psi_A for one subset family."""

    family: SubsetFamily
    lam: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)


# ============================================================================
# BLOCK BUILDERS
# ============================================================================

def build_lambda(cov: JointCovariance, fam: SubsetFamily) -> np.ndarray:
    """
    Stack Sigma_{A_a T} over the family, in family order.

    Returns:
        D_A x d_T matrix
    """
    fam.validate(cov.layout)
    return np.vstack([extract_block(cov, subset, TARGET) for subset in fam.subsets])


def block_bounds(cov: JointCovariance, fam: SubsetFamily) -> List[Tuple[int, int]]:
    bounds = []
    start = 0
    for size in fam.block_sizes(cov.layout):
        bounds.append((start, start + size))
        start += size
    return bounds


def build_gamma(cov: JointCovariance, fam: SubsetFamily) -> np.ndarray:
    """
    Auxiliary covariance Gamma_A.

    Diagonal blocks are Sigma_{A_a A_a}; off-diagonal blocks are
    Sigma_{A_a T} Sigma_T^{-1} Sigma_{T A_b}, all obtained from a single
    Cholesky factorization of Sigma_T. Duplicate subsets still get the
    through-T off-diagonal block.

    Raises:
        NumericalFailure: Sigma_T is not positive definite
    """
    lam = build_lambda(cov, fam)
    factor_t = cholesky_factor(cov.target_cov, context="Sigma_T")
    whitened = solve_triangular(factor_t, lam.T, lower=True)
    gamma = whitened.T @ whitened

    for subset, (lo, hi) in zip(fam.subsets, block_bounds(cov, fam)):
        gamma[lo:hi, lo:hi] = extract_block(cov, subset, subset)

    return 0.5 * (gamma + gamma.T)


def schur_from_blocks(
    sigma_t: np.ndarray,
    lam: np.ndarray,
    gamma: np.ndarray,
    context: str = "",
) -> np.ndarray:
    """Psi = Sigma_T - Lambda^T Gamma^{-1} Lambda via a Cholesky solve of Gamma."""
    return conditional_covariance(sigma_t, lam.T, gamma, context=context)


def psi_schur(cov: JointCovariance, fam: SubsetFamily) -> AuxiliarySystem:
    """
    Residual covariance Psi_A as the Schur complement of Gamma_A.

    Cost is dominated by the O(D_A^3) factorization of Gamma_A.

    Raises:
        NumericalFailure: Gamma_A (or Sigma_T) is not positive definite
    """
    lam = build_lambda(cov, fam)
    gamma = build_gamma(cov, fam)
    logger.debug("psi_schur family %s: D_A=%d", fam.label, gamma.shape[0])
    psi = schur_from_blocks(cov.target_cov, lam, gamma, context=f"Gamma for family {fam.label}")
    return AuxiliarySystem(family=fam, lam=lam, gamma=gamma, psi=psi)


def copy_joint_covariance(cov: JointCovariance, fam: SubsetFamily) -> np.ndarray:
    """Covariance of (T, Y_A): [[Sigma_T, Lambda^T], [Lambda, Gamma]]."""
    lam = build_lambda(cov, fam)
    gamma = build_gamma(cov, fam)
    return np.block([[cov.target_cov, lam.T], [lam, gamma]])


# ============================================================================
# WOODBURY PATH
# ============================================================================

def regression_blocks(
    cov: JointCovariance, fam: SubsetFamily
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Per-subset regression matrices and residual covariances.

    B_a = Sigma_{A_a T} Sigma_T^{-1} and
    Delta_a = Sigma_{A_a A_a} - Sigma_{A_a T} Sigma_T^{-1} Sigma_{T A_a}.

    Returns:
        (list of B_a, list of Delta_a) in family order
    """
    fam.validate(cov.layout)
    factor_t = cholesky_factor(cov.target_cov, context="Sigma_T")
    regressions = []
    residuals = []
    for subset in fam.subsets:
        cross = extract_block(cov, subset, TARGET)
        b = cholesky_solve(factor_t, cross.T).T
        delta = extract_block(cov, subset, subset) - b @ cross.T
        regressions.append(b)
        residuals.append(0.5 * (delta + delta.T))
    return regressions, residuals


def psi_woodbury(cov: JointCovariance, fam: SubsetFamily) -> np.ndarray:
    """
    Psi_A = (Sigma_T^{-1} + sum_a B_a^T Delta_a^{-1} B_a)^{-1}.

    Only d_T x d_T and per-subset systems are factorized, so this path is
    cheaper than psi_schur when the family is large and d_T small.

    Raises:
        NumericalFailure: Sigma_T or some Delta_a is not positive definite
    """
    d_t = cov.layout.target_dim
    factor_t = cholesky_factor(cov.target_cov, context="Sigma_T")
    precision = cholesky_solve(factor_t, np.eye(d_t))

    regressions, residuals = regression_blocks(cov, fam)
    for a, (b, delta) in enumerate(zip(regressions, residuals)):
        try:
            factor = cholesky_factor(delta, context=f"Delta for subset {a + 1} {fam.subsets[a]}")
        except NumericalFailure as exc:
            raise NumericalFailure(
                f"residual covariance of subset #{a + 1} {fam.subsets[a]} in family "
                f"{fam.label} is not positive definite",
                pivot=exc.pivot,
                context=exc.context,
            ) from exc
        w = solve_triangular(factor, b, lower=True)
        precision += w.T @ w

    factor_p = cholesky_factor(precision, context=f"Woodbury precision for family {fam.label}")
    psi = cholesky_solve(factor_p, np.eye(d_t))
    return 0.5 * (psi + psi.T)
