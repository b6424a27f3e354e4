"""
Monte Carlo replication harness.

Each replication runs the full pipeline on a freshly generated panel and
records the selected group count, the slope estimate with its confidence
interval, membership recovery, and the fixed effects and oracle comparison
estimators. A replication scores every requested IC constant from one lambda
path and one set of refits, so a constant sweep and a plain cell share code.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from estimation.inference import sandwich_covariance
from estimation.path_grouping import effective_fuse_tol, match_metrics, run_lambda_path
from estimation.qr_solver import solve_fe
from estimation.selection import RefitResult, choose_by_ic, ic_constants, refit, refit_candidates
from estimation.services import PipelineSettings
from panel.exceptions import ConfigError, PanelqError
from panel.ingest import write_panel_csv

from .dgp import GROUP_VALUES, SimConfig, generate_panel, true_coefficients

logger = logging.getLogger(__name__)

FREQUENCY_KEYS = ('1', '2', '3', '4', '5+')
EXECUTION_BACKENDS = ('local', 'celery')


@dataclass
class ReplicationRecord:
    """Outcome of one replication under one IC constant."""
    rep: int
    constant: float
    converged: bool = True
    error: Optional[str] = None
    k_hat: Optional[int] = None
    candidate_ks: list = field(default_factory=list)
    beta_hat: Optional[float] = None
    beta_lo: Optional[float] = None
    beta_hi: Optional[float] = None
    covered: Optional[bool] = None
    perfect: Optional[bool] = None
    frac_correct: Optional[float] = None
    fe_beta: Optional[float] = None
    fe_covered: Optional[bool] = None
    oracle_beta: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> 'ReplicationRecord':
        return cls(**values)


def _covers(cov, coef, index, truth):
    if cov is None:
        return None, None, None
    lo, hi = cov.confidence_intervals(coef)
    return float(lo[index]), float(hi[index]), bool(lo[index] <= truth <= hi[index])


def _safe_covariance(data, tau, fit, rule, pipeline, rep):
    try:
        return sandwich_covariance(
            data, tau, fit.grouping, fit,
            rule=rule, alpha_level=pipeline.hs_alpha,
            density_floor=pipeline.density_floor, settings=pipeline.solver,
        )
    except PanelqError as e:
        logger.warning(f"Replication {rep}: no {rule} covariance ({e.code})")
        return None


def run_replication(
    config: SimConfig,
    rep: int,
    constants: Sequence[float],
    pipeline: Optional[PipelineSettings] = None,
) -> list[ReplicationRecord]:
    """One replication scored under each IC constant, in the order given."""
    pipeline = _default_pipeline(config, pipeline)
    tau = config.tau
    sim = generate_panel(config, rep)
    data = sim.data
    true_beta = sim.true_beta

    def failed(error: str) -> list[ReplicationRecord]:
        return [ReplicationRecord(rep=rep, constant=c, converged=False, error=error) for c in constants]

    try:
        fe_fit = solve_fe(data, tau, pipeline.solver)
        if not fe_fit.converged:
            return failed('E_SOLVER')
        base = ic_constants(data, tau, fe_fit, config.pnt_constant, pipeline.c_min, pipeline.hs_alpha)
        path = run_lambda_path(
            data, tau, config.grid, fe_fit, pipeline.solver,
            fuse_tol=effective_fuse_tol(fe_fit.alpha, pipeline.fuse_tol), cap=pipeline.weight_cap,
        )
        fitted = refit_candidates(path, data, tau, pipeline.solver)
    except PanelqError as e:
        logger.error(f"Replication {rep} of {config.label} failed: {e.diagnostic()}")
        return failed(e.code)

    # Membership is judged on the path entry that attains the true group count.
    perfect = frac = None
    k0_entry = path.first_with_k(len(GROUP_VALUES))
    if k0_entry is not None:
        perfect, frac = match_metrics(k0_entry.grouping, sim.truth)

    fe_fit_as_refit = RefitResult.from_fixed_effects(fe_fit)
    fe_cov = _safe_covariance(data, tau, fe_fit_as_refit, pipeline.fe_bandwidth_rule, pipeline, rep)
    _, _, fe_covered = _covers(fe_cov, fe_fit_as_refit.coefficients, data.n, true_beta)

    try:
        oracle_beta = float(refit(data, tau, sim.truth, pipeline.solver).beta[0])
    except PanelqError as e:
        logger.warning(f"Replication {rep}: oracle refit failed ({e.code})")
        oracle_beta = None

    covariances = {}
    records = []
    for c in constants:
        selection = choose_by_ic(fitted, base.with_pnt_constant(data, c))
        chosen = selection.selected.refit
        if chosen.k not in covariances:
            covariances[chosen.k] = _safe_covariance(data, tau, chosen, pipeline.bandwidth_rule, pipeline, rep)
        lo, hi, covered = _covers(covariances[chosen.k], chosen.coefficients, chosen.k, true_beta)
        records.append(ReplicationRecord(
            rep=rep,
            constant=c,
            k_hat=chosen.k,
            candidate_ks=[cand.k for cand in selection.candidates],
            beta_hat=float(chosen.beta[0]),
            beta_lo=lo,
            beta_hi=hi,
            covered=covered,
            perfect=perfect,
            frac_correct=frac,
            fe_beta=float(fe_fit.beta[0]),
            fe_covered=fe_covered,
            oracle_beta=oracle_beta,
        ))
    return records


def _proportion(values) -> tuple[Optional[float], Optional[float]]:
    values = [bool(v) for v in values]
    if not values:
        return None, None
    p = sum(values) / len(values)
    return p, math.sqrt(p * (1.0 - p) / len(values))


def _bias_rmse(estimates, truth) -> dict:
    errors = np.array([e for e in estimates if e is not None], dtype=float) - truth
    if errors.size == 0:
        return {'bias': None, 'bias_se': None, 'rmse': None, 'rmse_se': None}
    bias = float(errors.mean())
    rmse = float(np.sqrt(np.mean(errors ** 2)))
    if errors.size > 1:
        bias_se = float(errors.std(ddof=1) / np.sqrt(errors.size))
        mse_se = float((errors ** 2).std(ddof=1) / np.sqrt(errors.size))
        rmse_se = mse_se / (2.0 * rmse) if rmse > 0 else 0.0
    else:
        bias_se = rmse_se = None
    return {'bias': bias, 'bias_se': bias_se, 'rmse': rmse, 'rmse_se': rmse_se}


def frequency_key(k: int) -> str:
    return str(k) if k < 5 else '5+'


@dataclass
class SimReport:
    config: SimConfig
    constant: float
    records: list
    max_failure_rate: float = 0.01

    @property
    def converged(self) -> list[ReplicationRecord]:
        return [r for r in self.records if r.converged]

    @property
    def failures(self) -> int:
        return len(self.records) - len(self.converged)

    @property
    def flagged(self) -> bool:
        return self.failures / len(self.records) >= self.max_failure_rate

    @property
    def true_beta(self) -> float:
        return true_coefficients(self.config)[1]

    def k_frequency(self) -> tuple[dict, dict]:
        ks = [frequency_key(r.k_hat) for r in self.converged]
        freq, se = {}, {}
        for key in FREQUENCY_KEYS:
            p, s = _proportion([k == key for k in ks])
            freq[key], se[key] = (p, s) if p is not None else (0.0, 0.0)
        return freq, se

    def summary(self) -> dict:
        ok = self.converged
        truth = self.true_beta
        grouped = _bias_rmse([r.beta_hat for r in ok], truth)
        fe = _bias_rmse([r.fe_beta for r in ok], truth)
        oracle = _bias_rmse([r.oracle_beta for r in ok], truth)
        coverage, coverage_se = _proportion([r.covered for r in ok if r.covered is not None])
        fe_coverage, fe_coverage_se = _proportion([r.fe_covered for r in ok if r.fe_covered is not None])
        matched = [r for r in ok if r.frac_correct is not None]
        perfect, perfect_se = _proportion([r.perfect for r in matched])
        fracs = np.array([r.frac_correct for r in matched], dtype=float)
        return {
            'reps': len(self.records),
            'converged': len(ok),
            'failures': self.failures,
            'failure_rate': self.failures / len(self.records),
            'flagged': self.flagged,
            'true_beta': truth,
            'beta_bias': grouped['bias'],
            'beta_bias_se': grouped['bias_se'],
            'beta_rmse': grouped['rmse'],
            'beta_rmse_se': grouped['rmse_se'],
            'coverage': coverage,
            'coverage_se': coverage_se,
            'match_count': len(matched),
            'perfect_match': perfect,
            'perfect_match_se': perfect_se,
            'avg_match': float(fracs.mean()) if fracs.size else None,
            'avg_match_se': float(fracs.std(ddof=1) / np.sqrt(fracs.size)) if fracs.size > 1 else None,
            'match_sd': float(fracs.std(ddof=1)) if fracs.size > 1 else None,
            'fe_beta_bias': fe['bias'],
            'fe_beta_rmse': fe['rmse'],
            'fe_coverage': fe_coverage,
            'fe_coverage_se': fe_coverage_se,
            'oracle_beta_bias': oracle['bias'],
            'oracle_beta_rmse': oracle['rmse'],
        }

    def to_dict(self, include_records: bool = True) -> dict:
        freq, se = self.k_frequency()
        report = {
            'schema': 1,
            'kind': 'simulation',
            'config': {**self.config.to_dict(), 'pnt_constant': self.constant},
            'summary': self.summary(),
            'k_frequency': freq,
            'k_frequency_se': se,
        }
        if include_records:
            report['records'] = [r.to_dict() for r in self.records]
        return report


def _gather(config, constants, pipeline, workers, backend) -> list[list[ReplicationRecord]]:
    """Per-rep record lists in rep order, from whichever backend."""
    constants = list(constants)
    if backend == 'celery':
        from .tasks import run_replication_task
        pending = [
            run_replication_task.delay(config.to_dict(), rep, constants)
            for rep in range(config.reps)
        ]
        return [[ReplicationRecord.from_dict(r) for r in result.get()] for result in pending]
    if backend != 'local':
        raise ConfigError(f"Unknown execution backend '{backend}', expected one of {', '.join(EXECUTION_BACKENDS)}")
    if workers == 1:
        return [run_replication(config, rep, constants, pipeline) for rep in range(config.reps)]
    return Parallel(n_jobs=workers)(
        delayed(run_replication)(config, rep, constants, pipeline) for rep in range(config.reps)
    )


def _default_pipeline(config: SimConfig, pipeline: Optional[PipelineSettings]) -> PipelineSettings:
    if pipeline is not None:
        return pipeline
    return PipelineSettings.from_settings(grid=config.grid, n_jobs=1)


def run_cell(
    config: SimConfig,
    workers: int = 1,
    backend: str = 'local',
    pipeline: Optional[PipelineSettings] = None,
    max_failure_rate: float = 0.01,
) -> SimReport:
    """All replications of one design cell at the configured IC constant."""
    return constant_sweep(config, [config.pnt_constant], workers, backend, pipeline, max_failure_rate)[config.pnt_constant]


def constant_sweep(
    config: SimConfig,
    constants: Iterable[float],
    workers: int = 1,
    backend: str = 'local',
    pipeline: Optional[PipelineSettings] = None,
    max_failure_rate: float = 0.01,
) -> dict[float, SimReport]:
    """One SimReport per IC constant c in p_nt = c n T^(1/4), sharing each rep's path and refits."""
    constants = list(dict.fromkeys(float(c) for c in constants))
    pipeline = _default_pipeline(config, pipeline)
    logger.info(f"Running {config.reps} replications of {config.label} for {len(constants)} constant(s)")
    per_rep = _gather(config, constants, pipeline, workers, backend)
    reports = {
        c: SimReport(config, c, [records[j] for records in per_rep], max_failure_rate)
        for j, c in enumerate(constants)
    }
    for c, report in reports.items():
        if report.flagged:
            logger.warning(f"{config.label} c={c}: {report.failures} of {config.reps} replications failed")
    freq, _ = reports[constants[0]].k_frequency()
    logger.info(f"Finished {config.label}: K=3 frequency {freq['3']:.3f}")
    return reports


def sweep_report(config: SimConfig, reports: dict[float, SimReport], include_records: bool = True) -> dict:
    """Report at the configured constant with the sweep curves attached."""
    base = reports.get(config.pnt_constant) or next(iter(reports.values()))
    report = base.to_dict(include_records)
    report['sweep'] = []
    for c in sorted(reports):
        freq, se = reports[c].k_frequency()
        summary = reports[c].summary()
        report['sweep'].append({
            'constant': c,
            'k_frequency': freq,
            'k_frequency_se': se,
            'beta_bias': summary['beta_bias'],
            'beta_rmse': summary['beta_rmse'],
            'coverage': summary['coverage'],
        })
    return report


def write_audit_csv(report: SimReport, path) -> None:
    frame = pd.DataFrame([r.to_dict() for r in report.records])
    frame['candidate_ks'] = frame['candidate_ks'].map(lambda ks: ' '.join(str(k) for k in ks))
    frame.to_csv(path, index=False, float_format='%.17g')


def export_panel(config: SimConfig, rep: int, path) -> None:
    write_panel_csv(generate_panel(config, rep).data, path)
