"""
Information-criterion selection of the number of groups.

For every distinct group count along the lambda path the panel is refitted
with one intercept per group and scored as

    IC(K) = sum rho_tau(refit residuals) + C_hat * K * p_nt

with C_hat = tau(1 - tau) * s_hat(tau) estimated from fixed-effects residuals
and p_nt = c * n * T^(1/4).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from panel.data import FixedEffectsFit, PanelData, as_tau, residuals
from panel.exceptions import ConfigError, NoConvergedEntriesError, SolverFailure

from .path_grouping import GroupStructure, LambdaPathEntry, LambdaPathResult
from .qr_solver import SolverReport, SolverSettings, build_grouped_problem, solve_weighted_qr

logger = logging.getLogger(__name__)

BANDWIDTH_RULES = ('hall-sheather', 'bofinger')


@dataclass(frozen=True, eq=False)
class RefitResult:
    """Unpenalized QR with one intercept per group; ``centers[g]`` belongs to group ``g``."""
    centers: np.ndarray
    beta: np.ndarray
    objective: float
    grouping: GroupStructure
    tau: float
    report: Optional[SolverReport] = None

    @property
    def k(self) -> int:
        return self.centers.size

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.centers, self.beta])

    def individual_alpha(self) -> np.ndarray:
        return self.centers[self.grouping.membership]

    @classmethod
    def from_fixed_effects(cls, fe_fit: FixedEffectsFit) -> 'RefitResult':
        """View a fixed-effects fit as the refit at the all-singletons grouping."""
        grouping = GroupStructure.singletons(fe_fit.alpha)
        return cls(
            centers=grouping.centers,
            beta=np.asarray(fe_fit.beta, dtype=float),
            objective=fe_fit.objective,
            grouping=grouping,
            tau=fe_fit.tau,
            report=fe_fit.report,
        )


def refit(
    data: PanelData,
    tau,
    grouping: GroupStructure,
    settings: Optional[SolverSettings] = None,
) -> RefitResult:
    """Re-estimate group intercepts and slopes without penalty.

    Raises:
        SolverFailure: the grouped QR did not converge.
    """
    tau = as_tau(tau)
    problem = build_grouped_problem(data, tau, grouping.membership, grouping.k)
    report = solve_weighted_qr(problem, settings)
    if not report.converged:
        raise SolverFailure(
            f"Refit with K={grouping.k} at tau={tau} ended with status {report.status.value}"
        )
    return RefitResult(
        centers=report.solution[:grouping.k],
        beta=report.solution[grouping.k:],
        objective=report.primal_objective,
        grouping=grouping,
        tau=tau,
        report=report,
    )


def _clip_bandwidth(h: float, tau: float) -> float:
    return float(min(h, (1.0 - 1e-3) * min(tau, 1.0 - tau)))


def hall_sheather_bandwidth(tau, m: int, alpha_level: float = 0.05) -> float:
    """h = m^(-1/3) z_{1-a/2}^(2/3) [1.5 phi(z_tau)^2 / (2 z_tau^2 + 1)]^(1/3), clipped inside (0, 1)."""
    tau = as_tau(tau)
    z = norm.ppf(tau)
    z_alpha = norm.ppf(1.0 - alpha_level / 2.0)
    h = m ** (-1.0 / 3.0) * z_alpha ** (2.0 / 3.0) * (1.5 * norm.pdf(z) ** 2 / (2.0 * z ** 2 + 1.0)) ** (1.0 / 3.0)
    return _clip_bandwidth(h, tau)


def bofinger_bandwidth(tau, m: int) -> float:
    """h = m^(-1/5) [4.5 phi(z_tau)^4 / (2 z_tau^2 + 1)^2]^(1/5), clipped inside (0, 1)."""
    tau = as_tau(tau)
    z = norm.ppf(tau)
    h = m ** (-1.0 / 5.0) * (4.5 * norm.pdf(z) ** 4 / (2.0 * z ** 2 + 1.0) ** 2) ** (1.0 / 5.0)
    return _clip_bandwidth(h, tau)


def bandwidth(rule: str, tau, m: int, alpha_level: float = 0.05) -> float:
    if rule == 'hall-sheather':
        return hall_sheather_bandwidth(tau, m, alpha_level)
    if rule == 'bofinger':
        return bofinger_bandwidth(tau, m)
    raise ConfigError(f"Unknown bandwidth rule '{rule}', expected one of {', '.join(BANDWIDTH_RULES)}")


def sparsity_from_residuals(resid: Sequence[float], tau, h: float) -> float:
    """Difference quotient (F^-1(tau + h) - F^-1(tau - h)) / 2h of the empirical residual quantiles."""
    tau = as_tau(tau)
    resid = np.asarray(resid, dtype=float)
    upper = np.quantile(resid, tau + h, method='inverted_cdf')
    lower = np.quantile(resid, tau - h, method='inverted_cdf')
    return max(0.0, float(upper - lower) / (2.0 * h))


def sparsity_estimate(fe_fit: FixedEffectsFit, data: PanelData, tau, h: float) -> float:
    return sparsity_from_residuals(residuals(data, fe_fit.alpha, fe_fit.beta), tau, h)


@dataclass(frozen=True)
class IcConstants:
    c_hat: float
    p_nt: float
    sparsity: float
    bandwidth: float

    def penalty(self, k: int) -> float:
        return self.c_hat * k * self.p_nt

    def with_pnt_constant(self, data: PanelData, pnt_constant: float) -> 'IcConstants':
        return IcConstants(self.c_hat, pnt_constant * data.n * data.t_bar ** 0.25, self.sparsity, self.bandwidth)


def ic_constants(
    data: PanelData,
    tau,
    fe_fit: FixedEffectsFit,
    pnt_constant: float = 0.1,
    c_min: float = 1e-3,
    alpha_level: float = 0.05,
) -> IcConstants:
    """C_hat = max(tau(1 - tau) s_hat(tau), c_min) and p_nt = c n T^(1/4), T the mean panel length."""
    tau = as_tau(tau)
    h = hall_sheather_bandwidth(tau, data.N, alpha_level)
    s_hat = sparsity_estimate(fe_fit, data, tau, h)
    c_hat = tau * (1.0 - tau) * s_hat
    if c_hat < c_min:
        logger.warning(f"Estimated IC constant {c_hat:.3e} below floor, using {c_min}")
        c_hat = c_min
    p_nt = pnt_constant * data.n * data.t_bar ** 0.25
    return IcConstants(c_hat=c_hat, p_nt=p_nt, sparsity=s_hat, bandwidth=h)


@dataclass(frozen=True, eq=False)
class IcCandidate:
    k: int
    lambda_tilde: float
    ic_value: float
    refit: RefitResult

    @property
    def grouping(self) -> GroupStructure:
        return self.refit.grouping


@dataclass(frozen=True, eq=False)
class IcSelection:
    """Candidates ordered by ascending K; ``chosen`` indexes the IC minimizer."""
    candidates: tuple
    chosen: int
    constants: IcConstants

    @property
    def c_hat(self) -> float:
        return self.constants.c_hat

    @property
    def p_nt(self) -> float:
        return self.constants.p_nt

    @property
    def selected(self) -> IcCandidate:
        return self.candidates[self.chosen]

    @property
    def k(self) -> int:
        return self.selected.k

    @property
    def alpha(self) -> np.ndarray:
        return self.selected.refit.individual_alpha()

    @property
    def beta(self) -> np.ndarray:
        return self.selected.refit.beta

    def candidate_for(self, k: int) -> Optional[IcCandidate]:
        for candidate in self.candidates:
            if candidate.k == k:
                return candidate
        return None


def distinct_k_entries(path: LambdaPathResult) -> list[LambdaPathEntry]:
    """First converged entry in grid order for each attained group count."""
    seen = {}
    for entry in path.converged_entries:
        seen.setdefault(entry.k, entry)
    return [seen[k] for k in sorted(seen)]


def _safe_refit(data, tau, entry, settings):
    try:
        return entry, refit(data, tau, entry.grouping, settings)
    except SolverFailure as e:
        logger.error(f"Dropping K={entry.k} from selection: {e}")
        return entry, None


def refit_candidates(
    path: LambdaPathResult,
    data: PanelData,
    tau,
    settings: Optional[SolverSettings] = None,
    n_jobs: int = 1,
) -> list[tuple[LambdaPathEntry, RefitResult]]:
    """Refit once per distinct K. Entries whose refit fails are left out.

    Raises:
        NoConvergedEntriesError: no path entry converged, or every refit failed.
    """
    tau = as_tau(tau)
    entries = distinct_k_entries(path)
    if not entries:
        raise NoConvergedEntriesError(f"None of the {len(path)} lambda-path entries converged")
    if n_jobs == 1:
        results = [_safe_refit(data, tau, entry, settings) for entry in entries]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_safe_refit)(data, tau, entry, settings) for entry in entries)
    fitted = [(entry, result) for entry, result in results if result is not None]
    if not fitted:
        raise NoConvergedEntriesError("Every candidate refit failed")
    return fitted


def choose_by_ic(fitted: list[tuple[LambdaPathEntry, RefitResult]], constants: IcConstants) -> IcSelection:
    """Score refitted candidates. Ties go to the smallest K."""
    candidates = tuple(
        IcCandidate(
            k=result.k,
            lambda_tilde=entry.lambda_tilde,
            ic_value=result.objective + constants.penalty(result.k),
            refit=result,
        )
        for entry, result in sorted(fitted, key=lambda pair: pair[1].k)
    )
    chosen = int(np.argmin([c.ic_value for c in candidates]))
    return IcSelection(candidates=candidates, chosen=chosen, constants=constants)


def select_by_ic(
    path: LambdaPathResult,
    data: PanelData,
    tau,
    fe_fit: FixedEffectsFit,
    constants: Optional[IcConstants] = None,
    settings: Optional[SolverSettings] = None,
    n_jobs: int = 1,
) -> IcSelection:
    tau = as_tau(tau)
    constants = constants or ic_constants(data, tau, fe_fit)
    selection = choose_by_ic(refit_candidates(path, data, tau, settings, n_jobs), constants)
    logger.info(
        f"Selected K={selection.k} at tau={tau} from candidates "
        f"{[c.k for c in selection.candidates]} (C_hat={constants.c_hat:.4f}, p_nt={constants.p_nt:.4f})"
    )
    return selection
