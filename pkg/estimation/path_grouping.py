"""
Lambda-path sweep and group extraction from fused intercepts.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from panel.data import FixedEffectsFit, PanelData, as_tau
from panel.exceptions import DimensionMismatchError, GridError, GroupCountMismatchError, PanelqError

from .qr_solver import SolverReport, SolverSettings, SolverStatus, data_loss, solve_penalized

logger = logging.getLogger(__name__)

DEFAULT_FUSE_TOL = 1e-4


@dataclass(frozen=True)
class LambdaGrid:
    """Ascending, duplicate-free grid of normalized penalty levels."""
    values: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise GridError("Lambda grid is empty")
        if not all(np.isfinite(values)) or values[0] < 0:
            raise GridError("Lambda grid values must be finite and non-negative")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise GridError("Lambda grid must be strictly ascending without duplicates")
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @property
    def max(self) -> float:
        return self.values[-1]

    @classmethod
    def from_spec(cls, spec: str) -> 'LambdaGrid':
        """Parse ``min:max:step`` or a comma-separated list of values."""
        spec = str(spec).strip()
        try:
            if ':' in spec:
                parts = [float(p) for p in spec.split(':')]
                if len(parts) != 3:
                    raise GridError(f"Grid spec must be min:max:step, got '{spec}'")
                low, high, step = parts
                if step <= 0 or high < low:
                    raise GridError(f"Grid spec needs step > 0 and max >= min, got '{spec}'")
                count = int(round((high - low) / step)) + 1
                values = np.round(low + step * np.arange(count), 12)
                values = values[values <= high + 1e-12]
                return cls(tuple(values.tolist()))
            return cls(tuple(float(v) for v in spec.split(',') if v.strip()))
        except ValueError as e:
            if isinstance(e, GridError):
                raise
            raise GridError(f"Could not parse lambda grid '{spec}': {e}")

    @classmethod
    def default(cls) -> 'LambdaGrid':
        from django.conf import settings
        return cls.from_spec(settings.PANELQ_GRID)


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Partition of individuals. ``membership`` holds 0-based labels ordered by ascending center."""
    centers: np.ndarray
    membership: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        membership = np.asarray(self.membership, dtype=np.int64)
        if membership.size and (membership.min() < 0 or membership.max() >= centers.size):
            raise DimensionMismatchError("Membership labels must lie in 0..k-1")
        if np.unique(membership).size != centers.size:
            raise DimensionMismatchError("Every group label must be used at least once")
        object.__setattr__(self, 'centers', centers)
        object.__setattr__(self, 'membership', membership)

    @property
    def k(self) -> int:
        return self.centers.size

    @property
    def n(self) -> int:
        return self.membership.size

    def individual_values(self) -> np.ndarray:
        """Group center of each individual."""
        return self.centers[self.membership]

    @classmethod
    def singletons(cls, alpha: Sequence[float]) -> 'GroupStructure':
        alpha = np.asarray(alpha, dtype=float)
        order = np.argsort(alpha, kind='stable')
        membership = np.empty(alpha.size, dtype=np.int64)
        membership[order] = np.arange(alpha.size)
        return cls(centers=alpha[order], membership=membership)

    @classmethod
    def from_labels(cls, labels: Sequence[int], values: Sequence[float]) -> 'GroupStructure':
        """Build from arbitrary labels, relabelling groups by ascending mean value."""
        labels = np.asarray(labels)
        values = np.asarray(values, dtype=float)
        uniq, inverse = np.unique(labels, return_inverse=True)
        means = np.array([values[inverse == g].mean() for g in range(uniq.size)])
        rank = np.empty(uniq.size, dtype=np.int64)
        rank[np.argsort(means, kind='stable')] = np.arange(uniq.size)
        return cls(centers=np.sort(means, kind='stable'), membership=rank[inverse])


def effective_fuse_tol(fe_alpha: Sequence[float], base: float = DEFAULT_FUSE_TOL) -> float:
    """Fusion threshold guarded against large alpha scales: max(base, 1e-6 * range)."""
    fe_alpha = np.asarray(fe_alpha, dtype=float)
    spread = float(np.ptp(fe_alpha)) if fe_alpha.size else 0.0
    return max(base, 1e-6 * spread)


def extract_groups(alpha: Sequence[float], fuse_tol: float = DEFAULT_FUSE_TOL) -> GroupStructure:
    """Single-linkage grouping: individuals within ``fuse_tol`` of each other, chained, share a group.

    In one dimension the connected components of the threshold graph are the
    runs of the sorted values whose consecutive gaps stay within the tolerance.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        raise DimensionMismatchError("Cannot group an empty coefficient vector")
    order = np.argsort(alpha, kind='stable')
    breaks = np.diff(alpha[order]) > fuse_tol
    sorted_labels = np.concatenate([[0], np.cumsum(breaks)])
    membership = np.empty(alpha.size, dtype=np.int64)
    membership[order] = sorted_labels
    k = int(sorted_labels[-1]) + 1
    centers = np.bincount(membership, weights=alpha, minlength=k) / np.bincount(membership, minlength=k)
    return GroupStructure(centers=centers, membership=membership)


def match_metrics(estimated: GroupStructure, truth: GroupStructure) -> tuple[bool, float]:
    """Compare memberships after aligning groups by ascending center.

    Returns:
        (perfect, frac_correct)

    Raises:
        GroupCountMismatchError: when the group counts differ.
    """
    if estimated.n != truth.n:
        raise DimensionMismatchError(f"Structures cover {estimated.n} and {truth.n} individuals")
    if estimated.k != truth.k:
        raise GroupCountMismatchError(f"Cannot align {estimated.k} estimated groups with {truth.k} true groups")

    def aligned(structure):
        rank = np.empty(structure.k, dtype=np.int64)
        rank[np.argsort(structure.centers, kind='stable')] = np.arange(structure.k)
        return rank[structure.membership]

    frac = float(np.mean(aligned(estimated) == aligned(truth)))
    return frac == 1.0, frac


@dataclass(frozen=True, eq=False)
class LambdaPathEntry:
    lambda_tilde: float
    alpha: np.ndarray
    beta: np.ndarray
    grouping: GroupStructure
    report: SolverReport
    loss: float

    @property
    def k(self) -> int:
        return self.grouping.k

    @property
    def converged(self) -> bool:
        return self.report.converged


@dataclass(frozen=True, eq=False)
class LambdaPathResult:
    entries: tuple
    fuse_tol: float

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def converged_entries(self) -> list[LambdaPathEntry]:
        return [e for e in self.entries if e.converged]

    @property
    def k_values(self) -> list[int]:
        return [e.k for e in self.entries]

    def first_with_k(self, k: int) -> Optional[LambdaPathEntry]:
        for entry in self.converged_entries:
            if entry.k == k:
                return entry
        return None


def _path_entry(data, tau, lambda_tilde, fe_fit, settings, fuse_tol, cap) -> LambdaPathEntry:
    try:
        alpha, beta, report = solve_penalized(data, tau, lambda_tilde, fe_fit, settings, cap)
    except (PanelqError, np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Penalized solve failed at lambda={lambda_tilde}: {e}")
        alpha, beta = np.array(fe_fit.alpha, dtype=float), np.array(fe_fit.beta, dtype=float)
        report = SolverReport(
            solution=np.concatenate([alpha, beta]),
            primal_objective=np.nan,
            dual_objective=np.nan,
            duality_gap=np.inf,
            iterations=0,
            status=SolverStatus.NUMERICAL_FAILURE,
            dual=np.zeros(0),
        )
    return LambdaPathEntry(
        lambda_tilde=lambda_tilde,
        alpha=alpha,
        beta=beta,
        grouping=extract_groups(alpha, fuse_tol),
        report=report,
        loss=data_loss(data, tau, alpha, beta),
    )


def run_lambda_path(
    data: PanelData,
    tau,
    grid: Iterable[float],
    fe_fit: FixedEffectsFit,
    settings: Optional[SolverSettings] = None,
    fuse_tol: Optional[float] = None,
    n_jobs: int = 1,
    cap: float = 1e8,
) -> LambdaPathResult:
    """Solve the penalized problem at every grid value, independently.

    Entries come back in grid order whatever ``n_jobs`` is.
    """
    tau = as_tau(tau)
    grid = grid if isinstance(grid, LambdaGrid) else LambdaGrid(tuple(grid))
    tol = fuse_tol if fuse_tol is not None else effective_fuse_tol(fe_fit.alpha)
    if n_jobs == 1:
        entries = [_path_entry(data, tau, lam, fe_fit, settings, tol, cap) for lam in grid]
    else:
        entries = Parallel(n_jobs=n_jobs)(
            delayed(_path_entry)(data, tau, lam, fe_fit, settings, tol, cap) for lam in grid
        )
    failed = sum(not e.converged for e in entries)
    if failed:
        logger.warning(f"{failed} of {len(entries)} lambda-path entries did not converge")
    logger.debug(f"Lambda path at tau={tau}: K values {[e.k for e in entries]}")
    return LambdaPathResult(entries=tuple(entries), fuse_tol=tol)
