"""
End-to-end grouped fixed effects quantile regression pipeline.

    FE fit -> IC constants -> lambda path -> IC selection -> sandwich inference
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from panel.data import FixedEffectsFit, PanelData, as_tau
from panel.exceptions import PanelqError, SingularCovarianceError, SolverFailure

from .inference import CovarianceEstimate, sandwich_covariance
from .path_grouping import LambdaGrid, LambdaPathResult, effective_fuse_tol, run_lambda_path
from .qr_solver import SolverSettings, solve_fe
from .selection import IcConstants, IcSelection, RefitResult, ic_constants, select_by_ic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineSettings:
    grid: LambdaGrid = field(default_factory=lambda: LambdaGrid.from_spec('0:0.35:0.005'))
    fuse_tol: float = 1e-4
    pnt_constant: float = 0.1
    c_min: float = 1e-3
    bandwidth_rule: str = 'hall-sheather'
    fe_bandwidth_rule: str = 'bofinger'
    hs_alpha: float = 0.05
    density_floor: float = 1e-6
    weight_cap: float = 1e8
    n_jobs: int = 1
    solver: SolverSettings = field(default_factory=SolverSettings)

    @classmethod
    def from_settings(cls, **overrides) -> 'PipelineSettings':
        """Defaults from django settings, then any non-None keyword overrides."""
        from django.conf import settings
        base = cls(
            grid=LambdaGrid.from_spec(settings.PANELQ_GRID),
            fuse_tol=settings.PANELQ_FUSE_TOL,
            pnt_constant=settings.PANELQ_PNT_CONSTANT,
            c_min=settings.PANELQ_C_MIN,
            bandwidth_rule=settings.PANELQ_BANDWIDTH_RULE,
            hs_alpha=settings.PANELQ_HS_ALPHA,
            density_floor=settings.PANELQ_DENSITY_FLOOR,
            weight_cap=settings.PANELQ_WEIGHT_CAP,
            n_jobs=settings.PANELQ_THREADS,
            solver=SolverSettings.from_settings(),
        )
        return replace(base, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict:
        return {
            'grid': list(self.grid.values),
            'fuse_tol': self.fuse_tol,
            'pnt_constant': self.pnt_constant,
            'c_min': self.c_min,
            'bandwidth_rule': self.bandwidth_rule,
            'fe_bandwidth_rule': self.fe_bandwidth_rule,
            'hs_alpha': self.hs_alpha,
            'density_floor': self.density_floor,
            'weight_cap': self.weight_cap,
            'gap_tol': self.solver.gap_tol,
            'max_iter': self.solver.max_iter,
        }


@dataclass(frozen=True)
class FitRequest:
    input: Path
    taus: tuple
    pipeline: PipelineSettings
    output: Optional[Path] = None
    format: str = 'json'


@dataclass(frozen=True, eq=False)
class TauFit:
    """Everything computed at one quantile level. ``error`` is set when the block was aborted."""
    tau: float
    fe_fit: Optional[FixedEffectsFit] = None
    fe_covariance: Optional[CovarianceEstimate] = None
    constants: Optional[IcConstants] = None
    path: Optional[LambdaPathResult] = None
    selection: Optional[IcSelection] = None
    covariance: Optional[CovarianceEstimate] = None
    error: Optional[PanelqError] = None
    warnings: tuple = ()

    @property
    def ok(self) -> bool:
        return self.error is None


def _covariance_or_none(data, tau, fit: RefitResult, rule, pipeline, label, warnings):
    try:
        return sandwich_covariance(
            data, tau, fit.grouping, fit,
            rule=rule,
            alpha_level=pipeline.hs_alpha,
            density_floor=pipeline.density_floor,
            settings=pipeline.solver,
        )
    except (SingularCovarianceError, SolverFailure) as e:
        logger.error(f"No {label} covariance at tau={tau}: {e}")
        warnings.append(e.diagnostic())
        return None


def fit_panel(data: PanelData, tau, pipeline: Optional[PipelineSettings] = None) -> TauFit:
    """Run the whole pipeline at one tau.

    Raises:
        SolverFailure: the preliminary fixed-effects fit did not converge.
        NoConvergedEntriesError: no lambda-path entry could be refitted.
    """
    tau = as_tau(tau)
    pipeline = pipeline or PipelineSettings()
    warnings = []

    fe_fit = solve_fe(data, tau, pipeline.solver)
    if not fe_fit.converged:
        raise SolverFailure(f"Fixed effects fit at tau={tau} ended with status {fe_fit.report.status.value}")
    logger.info(f"FE fit at tau={tau}: objective={fe_fit.objective:.6f}, iterations={fe_fit.report.iterations}")

    constants = ic_constants(data, tau, fe_fit, pipeline.pnt_constant, pipeline.c_min, pipeline.hs_alpha)
    fuse_tol = effective_fuse_tol(fe_fit.alpha, pipeline.fuse_tol)
    path = run_lambda_path(
        data, tau, pipeline.grid, fe_fit,
        settings=pipeline.solver, fuse_tol=fuse_tol, n_jobs=pipeline.n_jobs, cap=pipeline.weight_cap,
    )
    logger.info(f"Lambda path at tau={tau}: {len(path)} entries, K range {min(path.k_values)}..{max(path.k_values)}")
    selection = select_by_ic(path, data, tau, fe_fit, constants, pipeline.solver, pipeline.n_jobs)

    covariance = _covariance_or_none(data, tau, selection.selected.refit, pipeline.bandwidth_rule, pipeline, 'grouped', warnings)
    fe_covariance = _covariance_or_none(
        data, tau, RefitResult.from_fixed_effects(fe_fit), pipeline.fe_bandwidth_rule, pipeline, 'fixed effects', warnings,
    )
    return TauFit(
        tau=tau,
        fe_fit=fe_fit,
        fe_covariance=fe_covariance,
        constants=constants,
        path=path,
        selection=selection,
        covariance=covariance,
        warnings=tuple(warnings),
    )


def fit_taus(data: PanelData, taus: Sequence[float], pipeline: Optional[PipelineSettings] = None) -> list[TauFit]:
    """Fit every tau in ascending order; a failing tau becomes an error block instead of aborting the rest."""
    blocks = []
    for tau in sorted(as_tau(t) for t in taus):
        try:
            blocks.append(fit_panel(data, tau, pipeline))
        except PanelqError as e:
            logger.error(f"Aborted tau={tau}: {e.diagnostic()}")
            blocks.append(TauFit(tau=tau, error=e))
    return blocks


def grouped_alpha_bounds(block: TauFit, level: float = 0.95) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Per-individual confidence bounds of the grouped intercepts."""
    if block.covariance is None:
        return None
    refit = block.selection.selected.refit
    lo, hi = block.covariance.confidence_intervals(refit.coefficients, level)
    membership = refit.grouping.membership
    return lo[:refit.k][membership], hi[:refit.k][membership]
