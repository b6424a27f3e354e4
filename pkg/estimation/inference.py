"""
Sandwich covariance for refitted quantile regression coefficients.

The density at each design point is estimated by a difference quotient of
the fitted quantiles at tau +/- h on the same grouping (the "nid" estimator).
These standard errors condition on the selected grouping; they do not account
for the uncertainty of model selection.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.stats import norm

from panel.data import PanelData, as_tau
from panel.exceptions import SingularCovarianceError

from .path_grouping import GroupStructure
from .qr_solver import SolverSettings, build_grouped_problem
from .selection import RefitResult, bandwidth, refit

logger = logging.getLogger(__name__)

# Reciprocal condition numbers below this make the density matrix singular.
RCOND_LIMIT = 1e-13


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Covariance of (group intercepts, slopes) in that order."""
    matrix: np.ndarray
    bandwidth: float
    method: str = 'sandwich-nid'
    truncated: int = 0

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))

    def confidence_intervals(self, coef, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        coef = np.asarray(coef, dtype=float)
        half = norm.ppf(0.5 + level / 2.0) * self.standard_errors
        return coef - half, coef + half

    def slope_block(self, k: int) -> np.ndarray:
        return self.matrix[k:, k:]


def sandwich_covariance(
    data: PanelData,
    tau,
    grouping: GroupStructure,
    fit: RefitResult,
    rule: str = 'hall-sheather',
    alpha_level: float = 0.05,
    density_floor: float = 1e-6,
    settings: Optional[SolverSettings] = None,
    h: Optional[float] = None,
) -> CovarianceEstimate:
    """Sigma2^-1 Sigma1 Sigma2^-1 / N with Sigma1 = tau(1-tau) Z'Z/N and Sigma2 = Z' diag(f) Z / N.

    ``h`` fixes the bandwidth; by default it comes from ``rule`` at m = N.

    Raises:
        SingularCovarianceError: the density-weighted Gram matrix cannot be inverted.
        SolverFailure: an auxiliary refit at tau +/- h failed.
    """
    tau = as_tau(tau)
    if fit.k != grouping.k:
        raise SingularCovarianceError(f"Refit has {fit.k} groups, grouping has {grouping.k}")
    if h is None:
        h = bandwidth(rule, tau, data.N, alpha_level)
    upper = refit(data, tau + h, grouping, settings)
    lower = refit(data, tau - h, grouping, settings)

    Z = build_grouped_problem(data, tau, grouping.membership, grouping.k).design
    spread = Z @ (upper.coefficients - lower.coefficients)
    with np.errstate(divide='ignore'):
        density = np.where(spread > 0, 2.0 * h / spread, 0.0)
    truncated = int(np.sum(density < density_floor))
    if truncated:
        logger.warning(f"{truncated} of {data.N} density quotients truncated to {density_floor} at tau={tau}")
    density = np.maximum(density, density_floor)

    N = data.N
    sigma1 = tau * (1.0 - tau) * (Z.T @ Z).toarray() / N
    sigma2 = (Z.T @ Z.multiply(density[:, None])).toarray() / N
    try:
        lu = sla.lu_factor(sigma2, check_finite=True)
        rcond = 1.0 / max(np.linalg.cond(sigma2), 1.0)
        if not np.isfinite(rcond) or rcond < RCOND_LIMIT:
            raise SingularCovarianceError(f"Density-weighted Gram matrix is singular (rcond={rcond:.2e})")
        half = sla.lu_solve(lu, sigma1)
        matrix = sla.lu_solve(lu, half.T).T / N
    except (sla.LinAlgError, ValueError) as e:
        raise SingularCovarianceError(f"Could not invert density-weighted Gram matrix: {e}")
    matrix = 0.5 * (matrix + matrix.T)
    return CovarianceEstimate(matrix=matrix, bandwidth=h, truncated=truncated)
