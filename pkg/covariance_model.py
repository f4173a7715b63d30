"""
Covariance model for Gaussian partial information decomposition.
Block-indexed joint covariance of (T, S_1..S_N), subset families, and the
positive-definite matrix algebra (Cholesky, log-det, Schur complement, ridge)
every other module consumes.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import block_diag, cho_solve, lapack, solve_triangular

logger = logging.getLogger(__name__)

# Name of the target block in block selectors
TARGET = "T"

# Relative tolerance for the symmetry check of input matrices
SYMMETRY_TOLERANCE = 1e-12

Selector = Union[str, int, Iterable[Union[str, int]]]


# ============================================================================
# ERRORS
# ============================================================================

class PIDError(Exception):
    """Base class for every error raised by this package."""


class InputError(PIDError, ValueError):
    """Invalid arguments, layouts, indices or input files."""


class NumericalFailure(PIDError, ArithmeticError):
    """
    A Cholesky factorization failed (matrix not positive definite).

    Attributes:
        pivot: 1-based index of the failing pivot, None if unknown
        context: What was being factorized (family, subset, block)
    """

    def __init__(self, message: str, pivot: Optional[int] = None, context: str = ""):
        super().__init__(message)
        self.pivot = pivot
        self.context = context


# ============================================================================
# LAYOUT
# ============================================================================

@dataclass(frozen=True)
class BlockLayout:
    """Dimensions of the target block and of each source block."""

    target_dim: int
    source_dims: Tuple[int, ...]

    def __post_init__(self):
        source_dims = tuple(int(d) for d in self.source_dims)
        object.__setattr__(self, "source_dims", source_dims)
        object.__setattr__(self, "target_dim", int(self.target_dim))

        if self.target_dim < 1:
            raise InputError(f"target_dim must be >= 1, got {self.target_dim}")
        if len(source_dims) < 1:
            raise InputError("a layout needs at least one source")
        bad = [d for d in source_dims if d < 1]
        if bad:
            raise InputError(f"every source dimension must be >= 1, got {list(source_dims)}")

    @classmethod
    def scalar(cls, n_sources: int, target_dim: int = 1) -> "BlockLayout":
        """Layout with `n_sources` one-dimensional sources."""
        return cls(target_dim, (1,) * n_sources)

    @property
    def n_sources(self) -> int:
        return len(self.source_dims)

    @property
    def total_dim(self) -> int:
        return self.target_dim + sum(self.source_dims)

    @property
    def offsets(self) -> Tuple[int, ...]:
        """Start offsets of T, S_1, ..., S_N followed by total_dim."""
        bounds = [0, self.target_dim]
        for d in self.source_dims:
            bounds.append(bounds[-1] + d)
        return tuple(bounds)

    def source_dim(self, sources: Iterable[int]) -> int:
        """d_A: summed dimension of a set of sources (1-based)."""
        return sum(self.source_dims[i - 1] for i in self._check_sources(sources))

    def source_slice(self, i: int) -> slice:
        self._check_sources([i])
        bounds = self.offsets
        return slice(bounds[i], bounds[i + 1])

    def indices(self, selector: Selector) -> np.ndarray:
        """
        Column indices of a block selector.

        Args:
            selector: TARGET, a 1-based source index, or an iterable mixing both

        Returns:
            Integer array, target first, then sources in ascending index order
        """
        with_target, sources = self.parse_selector(selector)
        parts = []
        if with_target:
            parts.append(np.arange(0, self.target_dim))
        bounds = self.offsets
        for i in sources:
            parts.append(np.arange(bounds[i], bounds[i + 1]))
        if not parts:
            return np.zeros(0, dtype=int)
        return np.concatenate(parts)

    def parse_selector(self, selector: Selector) -> Tuple[bool, Tuple[int, ...]]:
        """Split a selector into (includes target, sorted source indices)."""
        if isinstance(selector, str):
            items = [selector]
        elif isinstance(selector, (int, np.integer)):
            items = [int(selector)]
        else:
            items = list(selector)

        with_target = False
        sources = []
        for item in items:
            if isinstance(item, str):
                if item != TARGET:
                    raise InputError(f"unknown block name {item!r}")
                with_target = True
            else:
                sources.append(int(item))
        return with_target, self._check_sources(sources)

    def summary(self) -> dict:
        return {
            "target_dim": self.target_dim,
            "source_dims": list(self.source_dims),
            "n_sources": self.n_sources,
            "total_dim": self.total_dim,
        }

    def _check_sources(self, sources: Iterable[int]) -> Tuple[int, ...]:
        checked = sorted({int(i) for i in sources})
        out_of_range = [i for i in checked if i < 1 or i > self.n_sources]
        if out_of_range:
            raise InputError(
                f"source index {out_of_range[0]} out of range 1..{self.n_sources}"
            )
        return tuple(checked)


# ============================================================================
# JOINT COVARIANCE
# ============================================================================

@dataclass(frozen=True)
class JointCovariance:
    """Joint covariance of (T, S_1, ..., S_N) with its block layout."""

    layout: BlockLayout
    sigma: np.ndarray = field(repr=False)

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        n = self.layout.total_dim

        if sigma.shape != (n, n):
            raise InputError(f"sigma has shape {sigma.shape}, layout needs ({n}, {n})")
        if not np.all(np.isfinite(sigma)):
            raise InputError("sigma contains non-finite entries")

        scale = float(np.max(np.abs(sigma))) if sigma.size else 0.0
        asymmetry = float(np.max(np.abs(sigma - sigma.T))) if sigma.size else 0.0
        if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1e-300):
            raise InputError(
                f"sigma is not symmetric (max |S - S^T| = {asymmetry:.3e}, scale {scale:.3e})"
            )

        sigma = 0.5 * (sigma + sigma.T)
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_sources(self) -> int:
        return self.layout.n_sources

    @property
    def target_cov(self) -> np.ndarray:
        """Sigma_T."""
        return extract_block(self, TARGET, TARGET)

    def block(self, rows: Selector, cols: Selector) -> np.ndarray:
        return extract_block(self, rows, cols)


def extract_block(cov: JointCovariance, rows: Selector, cols: Selector) -> np.ndarray:
    """
    Sub-matrix of the joint covariance at the selected row and column blocks.

    Args:
        cov: Joint covariance
        rows: Block selector for rows (TARGET and/or 1-based source indices)
        cols: Block selector for columns

    Returns:
        Copy of the sub-matrix, blocks in ascending source order
    """
    r = cov.layout.indices(rows)
    c = cov.layout.indices(cols)
    return cov.sigma[np.ix_(r, c)].copy()


# ============================================================================
# SUBSET FAMILIES
# ============================================================================

@dataclass(frozen=True)
class SubsetFamily:
    """
    Ordered collection of nonempty source subsets (1-based indices).

    The subset order fixes the block order of the stacked auxiliary vector.
    Duplicate subsets are kept as independent copies.
    """

    subsets: Tuple[Tuple[int, ...], ...]
    label: str = ""

    def __post_init__(self):
        normalized = []
        for subset in self.subsets:
            items = [int(i) for i in subset]
            if not items:
                raise InputError("a subset family cannot contain an empty subset")
            if len(set(items)) != len(items):
                raise InputError(f"subset {tuple(items)} repeats a source")
            normalized.append(tuple(sorted(items)))
        if not normalized:
            raise InputError("a subset family needs at least one subset")
        object.__setattr__(self, "subsets", tuple(normalized))
        if not self.label:
            object.__setattr__(self, "label", "{" + ",".join(_fmt_subset(s) for s in normalized) + "}")

    @classmethod
    def all_of_size(cls, n_sources: int, k: int) -> "SubsetFamily":
        """C_K: every K-subset of {1..N} in lexicographic order."""
        if k < 1 or k > n_sources:
            raise InputError(f"subset size {k} out of range 1..{n_sources}")
        subsets = tuple(itertools.combinations(range(1, n_sources + 1), k))
        return cls(subsets, label=f"C{k}")

    @classmethod
    def unique_pair(cls, n_sources: int, i: int) -> "SubsetFamily":
        """U_i = ({i}, complement of i)."""
        rest = _complement(n_sources, i)
        return cls(((i,), rest), label=f"U{i}")

    @classmethod
    def complement(cls, n_sources: int, i: int) -> "SubsetFamily":
        """V_i = (complement of i,)."""
        return cls((_complement(n_sources, i),), label=f"V{i}")

    @classmethod
    def single(cls, subset: Iterable[int]) -> "SubsetFamily":
        subset = tuple(sorted(int(i) for i in subset))
        return cls((subset,), label=_fmt_subset(subset))

    @property
    def m(self) -> int:
        return len(self.subsets)

    def dimension(self, layout: BlockLayout) -> int:
        """D_A = sum of d_A over the family."""
        return sum(layout.source_dim(s) for s in self.subsets)

    def block_sizes(self, layout: BlockLayout) -> List[int]:
        return [layout.source_dim(s) for s in self.subsets]

    def validate(self, layout: BlockLayout) -> None:
        for subset in self.subsets:
            layout.source_dim(subset)


def _complement(n_sources: int, i: int) -> Tuple[int, ...]:
    if n_sources < 2:
        raise InputError("U_i and V_i need at least two sources")
    if i < 1 or i > n_sources:
        raise InputError(f"source index {i} out of range 1..{n_sources}")
    return tuple(j for j in range(1, n_sources + 1) if j != i)


def _fmt_subset(subset: Sequence[int]) -> str:
    return "{" + ",".join(str(i) for i in subset) + "}"


# ============================================================================
# POSITIVE-DEFINITE ALGEBRA
# ============================================================================

def cholesky_factor(matrix: np.ndarray, context: str = "") -> np.ndarray:
    """
    Lower Cholesky factor of a symmetric matrix.

    The input is symmetrized as (M + M^T) / 2 first. A non-positive pivot is
    the only positive-definiteness test.

    Args:
        matrix: Square symmetric matrix
        context: Description used in the failure message

    Returns:
        Lower-triangular factor L with L L^T = M

    Raises:
        NumericalFailure: the matrix is not positive definite
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        return np.zeros((0, 0))

    where = f" ({context})" if context else ""
    if not np.all(np.isfinite(a)):
        raise NumericalFailure(f"matrix{where} has non-finite entries", context=context)

    sym = 0.5 * (a + a.T)
    factor, info = lapack.dpotrf(sym, lower=1, clean=1)
    if info > 0:
        raise NumericalFailure(
            f"matrix{where} is not positive definite: pivot {info} of {a.shape[0]} failed",
            pivot=int(info),
            context=context,
        )
    if info < 0:
        raise NumericalFailure(f"Cholesky argument {-info} is invalid{where}", context=context)
    return factor


def logdet_from_factor(factor: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(factor))))


def cholesky_logdet(matrix: np.ndarray, context: str = "") -> float:
    """log det M = 2 * sum(log diag(L)); raises NumericalFailure when M is not PD."""
    return logdet_from_factor(cholesky_factor(matrix, context))


def cholesky_solve(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M X = B given the lower Cholesky factor of M."""
    return cho_solve((factor, True), rhs)


def conditional_covariance(
    sigma_xx: np.ndarray,
    sigma_xy: np.ndarray,
    sigma_yy: np.ndarray,
    context: str = "",
) -> np.ndarray:
    """
    Schur complement Sigma_xx - Sigma_xy Sigma_yy^{-1} Sigma_yx.

    Computed as Sigma_xx - W^T W with W = L^{-1} Sigma_yx, where L is the
    Cholesky factor of Sigma_yy; no explicit inverse is formed.
    """
    factor = cholesky_factor(sigma_yy, context)
    w = solve_triangular(factor, np.asarray(sigma_xy).T, lower=True)
    result = np.asarray(sigma_xx, dtype=float) - w.T @ w
    return 0.5 * (result + result.T)


def schur_conditional(cov: JointCovariance, conditioning: Selector) -> np.ndarray:
    """
    Cov(T | selected source blocks).

    Args:
        cov: Joint covariance
        conditioning: Nonempty selector of source indices

    Returns:
        d_T x d_T conditional covariance
    """
    with_target, sources = cov.layout.parse_selector(conditioning)
    if with_target:
        raise InputError("cannot condition the target on itself")
    if not sources:
        raise InputError("conditioning selector is empty")
    return conditional_covariance(
        cov.target_cov,
        extract_block(cov, TARGET, sources),
        extract_block(cov, sources, sources),
        context=f"Sigma_YY for sources {_fmt_subset(sources)}",
    )


def ridge(cov: JointCovariance, lam: float) -> JointCovariance:
    """
    Ridge-regularized covariance Sigma + lam * I.

    lam = 0 returns the input unchanged; lam > 0 makes any PSD input PD.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise InputError(f"ridge parameter must be >= 0, got {lam}")
    if lam == 0.0:
        return cov
    logger.debug("ridge lam=%g on %d-dim covariance", lam, cov.layout.total_dim)
    return JointCovariance(cov.layout, cov.sigma + lam * np.eye(cov.layout.total_dim))


# ============================================================================
# SYSTEM TRANSFORMATIONS
# ============================================================================

def restrict_sources(cov: JointCovariance, sources: Iterable[int]) -> JointCovariance:
    """Drop the rows/columns of excluded sources; kept sources are renumbered 1..k."""
    _, kept = cov.layout.parse_selector(list(sources))
    if not kept:
        raise InputError("cannot restrict to an empty source set")
    idx = cov.layout.indices([TARGET, *kept])
    layout = BlockLayout(cov.layout.target_dim, tuple(cov.layout.source_dims[i - 1] for i in kept))
    return JointCovariance(layout, cov.sigma[np.ix_(idx, idx)])


def permute_sources(cov: JointCovariance, perm: Sequence[int]) -> JointCovariance:
    """
    Relabel sources so that new source i is old source perm[i-1].

    Args:
        cov: Joint covariance
        perm: Permutation of 1..N
    """
    n = cov.n_sources
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(1, n + 1)):
        raise InputError(f"{perm} is not a permutation of 1..{n}")
    bounds = cov.layout.offsets
    idx = [np.arange(0, cov.layout.target_dim)]
    idx += [np.arange(bounds[p], bounds[p + 1]) for p in perm]
    idx = np.concatenate(idx)
    layout = BlockLayout(cov.layout.target_dim, tuple(cov.layout.source_dims[p - 1] for p in perm))
    return JointCovariance(layout, cov.sigma[np.ix_(idx, idx)])


def stack_independent(first: JointCovariance, second: JointCovariance) -> JointCovariance:
    """
    Joint covariance of two independent systems with T = (T_a, T_b) and S_i = (S_i^a, S_i^b).
    """
    if first.n_sources != second.n_sources:
        raise InputError("stacked systems must have the same number of sources")

    combined = block_diag(first.sigma, second.sigma)
    shift = first.layout.total_dim
    a_bounds = first.layout.offsets
    b_bounds = second.layout.offsets

    order = [np.arange(a_bounds[0], a_bounds[1]), shift + np.arange(b_bounds[0], b_bounds[1])]
    for i in range(1, first.n_sources + 1):
        order.append(np.arange(a_bounds[i], a_bounds[i + 1]))
        order.append(shift + np.arange(b_bounds[i], b_bounds[i + 1]))
    order = np.concatenate(order)

    layout = BlockLayout(
        first.layout.target_dim + second.layout.target_dim,
        tuple(a + b for a, b in zip(first.layout.source_dims, second.layout.source_dims)),
    )
    return JointCovariance(layout, combined[np.ix_(order, order)])


def blockwise_transform(
    cov: JointCovariance,
    target_map: np.ndarray,
    source_maps: Sequence[np.ndarray],
) -> JointCovariance:
    """Covariance of (A_T T, A_1 S_1, ..., A_N S_N) for square per-block maps."""
    if len(source_maps) != cov.n_sources:
        raise InputError("one map per source is required")
    maps = [np.atleast_2d(target_map)] + [np.atleast_2d(a) for a in source_maps]
    dims = (cov.layout.target_dim,) + cov.layout.source_dims
    for a, d in zip(maps, dims):
        if a.shape != (d, d):
            raise InputError(f"block map of shape {a.shape} does not match block dimension {d}")
    big = block_diag(*maps)
    transformed = big @ cov.sigma @ big.T
    return JointCovariance(cov.layout, 0.5 * (transformed + transformed.T))
