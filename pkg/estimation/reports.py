"""
Versioned fit/simulation report serialization and plot-series extraction.

JSON is the canonical format. The CSV layout flattens the same numbers into
one row per (tau, section, name, index).
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from panel.data import PanelData
from panel.exceptions import ReportSchemaError

from .services import PipelineSettings, TauFit

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REPORT_KINDS = ('fit', 'simulation', 'table')
SERIES_COLUMNS = ['series', 'x', 'y', 'lo', 'hi']


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _finite_or_none(value) -> Optional[float]:
    value = float(value)
    return value if np.isfinite(value) else None


def _strict(value):
    """Replace non-finite floats with None so the document is strict JSON."""
    if isinstance(value, dict):
        return {key: _strict(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_strict(item) for item in value]
    if isinstance(value, (float, np.floating)):
        return _finite_or_none(value)
    return value


def _coefficient_block(names, coef, cov, level=0.95, prefix='beta') -> dict:
    block = {'names': list(names), prefix: _floats(coef)}
    if cov is None:
        block.update({f'{prefix}_se': None, f'{prefix}_lo': None, f'{prefix}_hi': None})
    else:
        se = cov.standard_errors
        lo, hi = cov.confidence_intervals(coef, level)
        block.update({f'{prefix}_se': _floats(se), f'{prefix}_lo': _floats(lo), f'{prefix}_hi': _floats(hi)})
    return block


def _block_to_dict(data: PanelData, block: TauFit) -> dict:
    if not block.ok:
        return {
            'tau': block.tau,
            'status': 'failed',
            'error': {'code': block.error.code, 'message': str(block.error)},
        }

    fe = block.fe_fit
    fe_refit_order = np.argsort(np.asarray(fe.alpha), kind='stable')
    fe_cov = block.fe_covariance
    fixed_effects = {
        'objective': fe.objective,
        'iterations': fe.report.iterations,
        'alpha': _floats(fe.alpha),
        **_coefficient_block(data.covariate_names, fe.beta, None),
    }
    if fe_cov is not None:
        # Covariance rows follow the singleton grouping, i.e. individuals sorted by alpha.
        se = fe_cov.standard_errors
        lo, hi = fe_cov.confidence_intervals(np.concatenate([np.asarray(fe.alpha)[fe_refit_order], fe.beta]))
        rank = np.empty(data.n, dtype=np.int64)
        rank[fe_refit_order] = np.arange(data.n)
        fixed_effects.update({
            'alpha_se': _floats(se[:data.n][rank]),
            'alpha_lo': _floats(lo[:data.n][rank]),
            'alpha_hi': _floats(hi[:data.n][rank]),
            'beta_se': _floats(se[data.n:]),
            'beta_lo': _floats(lo[data.n:]),
            'beta_hi': _floats(hi[data.n:]),
        })

    selection = block.selection
    refit = selection.selected.refit
    cov = block.covariance
    grouped = {
        'objective': refit.objective,
        'iterations': refit.report.iterations if refit.report is not None else 0,
        'alpha': _floats(refit.individual_alpha()),
        'centers': _floats(refit.centers),
        **_coefficient_block(data.covariate_names, refit.beta, None),
    }
    if cov is not None:
        se = cov.standard_errors
        lo, hi = cov.confidence_intervals(refit.coefficients)
        k = refit.k
        grouped.update({
            'center_se': _floats(se[:k]),
            'center_lo': _floats(lo[:k]),
            'center_hi': _floats(hi[:k]),
            'beta_se': _floats(se[k:]),
            'beta_lo': _floats(lo[k:]),
            'beta_hi': _floats(hi[k:]),
        })

    constants = block.constants
    return {
        'tau': block.tau,
        'status': 'ok',
        'error': None,
        'selected_k': selection.k,
        'membership': [int(g) + 1 for g in refit.grouping.membership],
        'fixed_effects': fixed_effects,
        'grouped': grouped,
        'path': [
            {
                'lambda': entry.lambda_tilde,
                'k': entry.k,
                'loss': entry.loss,
                'status': entry.report.status.value,
                'iterations': entry.report.iterations,
                'gap': _finite_or_none(entry.report.duality_gap),
            }
            for entry in block.path
        ],
        'ic': [
            {'k': c.k, 'lambda': c.lambda_tilde, 'ic': c.ic_value, 'refit_objective': c.refit.objective}
            for c in selection.candidates
        ],
        'diagnostics': {
            'c_hat': constants.c_hat,
            'p_nt': constants.p_nt,
            'sparsity': constants.sparsity,
            'bandwidth': constants.bandwidth,
            'fuse_tol': block.path.fuse_tol,
            'covariance_bandwidth': cov.bandwidth if cov is not None else None,
            'truncated_density': cov.truncated if cov is not None else None,
            'warnings': list(block.warnings),
        },
    }


def build_fit_report(
    data: PanelData,
    blocks: list[TauFit],
    pipeline: PipelineSettings,
    source: Optional[Union[str, Path]] = None,
) -> dict:
    return {
        'schema': SCHEMA_VERSION,
        'kind': 'fit',
        'input': {
            'path': str(source) if source is not None else None,
            'n': data.n,
            'N': data.N,
            'p': data.p,
            't_bar': data.t_bar,
            'balanced': data.is_balanced,
            'labels': [str(label) for label in data.labels],
            'covariates': list(data.covariate_names),
        },
        'settings': pipeline.as_dict(),
        'blocks': [_block_to_dict(data, block) for block in blocks],
    }


def report_to_json(report: dict) -> str:
    return json.dumps(_strict(report), indent=2, sort_keys=False, allow_nan=False) + '\n'


def _csv_rows(report: dict) -> list[dict]:
    rows = []

    def add(tau, section, name, index, value, se=None, lo=None, hi=None):
        rows.append({
            'tau': tau, 'section': section, 'name': name, 'index': index,
            'value': value, 'se': se, 'lo': lo, 'hi': hi,
        })

    if report['kind'] == 'table':
        for cell in report['cells']:
            label = _cell_label(cell)
            rows.extend({**row, 'section': f"{label}:{row['section']}"} for row in _csv_rows(cell))
        return rows

    if report['kind'] == 'simulation':
        for key, value in report['summary'].items():
            if isinstance(value, (int, float)) or value is None:
                add(report['config']['tau'], 'summary', key, 0, value)
        for key, value in report['k_frequency'].items():
            add(report['config']['tau'], 'k_frequency', key, 0, value, report['k_frequency_se'][key])
        for point in report.get('sweep', []):
            for key, value in point['k_frequency'].items():
                add(report['config']['tau'], f"sweep:{point['constant']!r}", key, 0, value)
        return rows

    for block in report['blocks']:
        tau = block['tau']
        if block['status'] != 'ok':
            add(tau, 'error', block['error']['code'], 0, None)
            continue
        add(tau, 'selection', 'selected_k', 0, block['selected_k'])
        for name, value in block['diagnostics'].items():
            if isinstance(value, (int, float)) or value is None:
                add(tau, 'diagnostics', name, 0, value)
        for section in ('fixed_effects', 'grouped'):
            part = block[section]
            for j, name in enumerate(part['names']):
                add(
                    tau, section, name, j, part['beta'][j],
                    *(part[key][j] if part.get(key) is not None else None for key in ('beta_se', 'beta_lo', 'beta_hi')),
                )
            for i, value in enumerate(part['alpha']):
                add(tau, section, 'alpha', i, value)
        for i, label in enumerate(block['membership']):
            add(tau, 'membership', 'group', i, label)
        for entry in block['path']:
            add(tau, 'path', 'k', 0, entry['k'], lo=entry['lambda'], hi=entry['loss'])
        for entry in block['ic']:
            add(tau, 'ic', 'ic', entry['k'], entry['ic'], lo=entry['lambda'], hi=entry['refit_objective'])
    return rows


def report_to_csv(report: dict, path: Optional[Union[str, Path]] = None) -> Union[Path, str]:
    """Write the flattened report; without a path the CSV text is returned."""
    frame = pd.DataFrame(_csv_rows(report), columns=['tau', 'section', 'name', 'index', 'value', 'se', 'lo', 'hi'])
    if path is None:
        return frame.to_csv(index=False, float_format='%.17g')
    path = Path(path)
    frame.to_csv(path, index=False, float_format='%.17g')
    return path


def write_report(report: dict, path: Union[str, Path], fmt: str = 'json') -> Path:
    path = Path(path)
    if fmt == 'csv':
        return report_to_csv(report, path)
    path.write_text(report_to_json(report), encoding='utf-8')
    return path


def validate_report(report) -> dict:
    if not isinstance(report, dict) or 'schema' not in report:
        raise ReportSchemaError("Report has no 'schema' field")
    if report['schema'] != SCHEMA_VERSION:
        raise ReportSchemaError(f"Unsupported report schema {report['schema']!r}, expected {SCHEMA_VERSION}")
    if report.get('kind') not in REPORT_KINDS:
        raise ReportSchemaError(f"Unknown report kind {report.get('kind')!r}")
    return report


def load_report(path: Union[str, Path]) -> dict:
    path = Path(path)
    try:
        report = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise ReportSchemaError(f"Report not found: {path}", code='E_REPORT_NOT_FOUND')
    except json.JSONDecodeError as e:
        raise ReportSchemaError(f"Report {path} is not valid JSON: {e}")
    return validate_report(report)


def _fit_series(report: dict) -> list[dict]:
    rows = []
    blocks = [b for b in report['blocks'] if b['status'] == 'ok']
    for section, prefix in (('fixed_effects', 'fe'), ('grouped', 'grouped')):
        names = report['input']['covariates']
        for j, name in enumerate(names):
            for block in blocks:
                part = block[section]
                lo = part['beta_lo'][j] if part.get('beta_lo') is not None else np.nan
                hi = part['beta_hi'][j] if part.get('beta_hi') is not None else np.nan
                rows.append({'series': f'{prefix}:{name}', 'x': block['tau'], 'y': part['beta'][j], 'lo': lo, 'hi': hi})
    for block in blocks:
        fe = block['fixed_effects']
        grouped = block['grouped']
        order = np.argsort(fe['alpha'], kind='stable')
        fe_lo, fe_hi = fe.get('alpha_lo'), fe.get('alpha_hi')
        centers_lo, centers_hi = grouped.get('center_lo'), grouped.get('center_hi')
        tag = f"{block['tau']:g}"
        for rank, i in enumerate(order, start=1):
            rows.append({
                'series': f'alpha:fe@{tag}', 'x': rank, 'y': fe['alpha'][i],
                'lo': fe_lo[i] if fe_lo is not None else np.nan,
                'hi': fe_hi[i] if fe_hi is not None else np.nan,
            })
        for rank, i in enumerate(order, start=1):
            g = block['membership'][i] - 1
            rows.append({
                'series': f'alpha:grouped@{tag}', 'x': rank, 'y': grouped['alpha'][i],
                'lo': centers_lo[g] if centers_lo is not None else np.nan,
                'hi': centers_hi[g] if centers_hi is not None else np.nan,
            })
    return rows


def _frequency_key_x(key: str) -> float:
    return 5.0 if key == '5+' else float(key)


def _simulation_series(report: dict) -> list[dict]:
    rows = []
    for key, value in report['k_frequency'].items():
        se = report['k_frequency_se'][key]
        rows.append({'series': 'k_frequency', 'x': _frequency_key_x(key), 'y': value, 'lo': value - 1.96 * se, 'hi': value + 1.96 * se})
    for point in report.get('sweep', []):
        for key, value in point['k_frequency'].items():
            se = point['k_frequency_se'][key]
            rows.append({
                'series': f'sweep:k_frequency:{key}', 'x': point['constant'], 'y': value,
                'lo': value - 1.96 * se, 'hi': value + 1.96 * se,
            })
    return rows


def _cell_label(report: dict) -> str:
    config = report['config']
    return f"dgp{config['dgp']}-{config['model']}-{config['error']}"


def plot_series(report: dict) -> pd.DataFrame:
    """Long-format plot data with columns series, x, y, lo, hi. Nothing is rendered."""
    report = validate_report(report)
    if report['kind'] == 'fit':
        rows = _fit_series(report)
    elif report['kind'] == 'table':
        rows = [
            {**row, 'series': f"{_cell_label(cell)}:{row['series']}"}
            for cell in report['cells']
            for row in _simulation_series(cell)
        ]
    else:
        rows = _simulation_series(report)
    return pd.DataFrame(rows, columns=SERIES_COLUMNS)
