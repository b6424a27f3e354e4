"""
Table-row presets: one preset expands to the eight design cells of a row.

Preset names look like ``T3-n30-T60``: table number, then n and T. Tables
1, 3 and 5 are at tau = 0.5 and tables 2, 4 and 6 at tau = 0.75. Tables 1-2
report group-count frequencies, 3-4 slope bias/RMSE/coverage for the grouped
and fixed effects estimators, 5-6 membership recovery.
"""

import re
from dataclasses import dataclass, replace
from itertools import product

import pandas as pd

from panel.exceptions import ConfigError

from .dgp import ERRORS, MODELS, SimConfig
from .harness import FREQUENCY_KEYS, SimReport

PRESET_PATTERN = re.compile(r'^T(?P<table>[1-6])-n(?P<n>\d+)-T(?P<t>\d+)$')


@dataclass(frozen=True)
class TablePreset:
    table: int
    n: int
    t: int

    @property
    def tau(self) -> float:
        return 0.5 if self.table % 2 == 1 else 0.75

    @property
    def kind(self) -> str:
        return {1: 'frequency', 2: 'frequency', 3: 'slope', 4: 'slope', 5: 'membership', 6: 'membership'}[self.table]

    @property
    def name(self) -> str:
        return f"T{self.table}-n{self.n}-T{self.t}"


def parse_preset(name: str) -> TablePreset:
    match = PRESET_PATTERN.match(name.strip())
    if not match:
        raise ConfigError(f"Table preset must look like T1-n30-T60, got '{name}'", code='E_CONFIG_PRESET')
    return TablePreset(int(match['table']), int(match['n']), int(match['t']))


def preset_configs(preset: TablePreset, base: SimConfig) -> list[SimConfig]:
    """The eight cells of the row: design x model x error, in that nesting order."""
    return [
        replace(base, dgp=dgp, model=model, error=error, n=preset.n, t=preset.t, tau=preset.tau)
        for dgp, model, error in product((1, 2), MODELS, ERRORS)
    ]


def _cell_columns(report: SimReport) -> dict:
    config = report.config
    return {'dgp': config.dgp, 'model': config.model, 'error': config.error, 'n': config.n, 'T': config.t}


def table_rows(preset: TablePreset, reports: list[SimReport]) -> pd.DataFrame:
    """Row layout of the preset's table, one row per cell."""
    rows = []
    for report in reports:
        row = _cell_columns(report)
        summary = report.summary()
        if preset.kind == 'frequency':
            freq, _ = report.k_frequency()
            row.update({f'K={key}': freq[key] for key in FREQUENCY_KEYS})
        elif preset.kind == 'slope':
            row.update({
                'PQR bias': summary['beta_bias'],
                'PQR RMSE': summary['beta_rmse'],
                'PQR coverage': summary['coverage'],
                'QRFE bias': summary['fe_beta_bias'],
                'QRFE RMSE': summary['fe_beta_rmse'],
                'QRFE coverage': summary['fe_coverage'],
            })
        else:
            row.update({
                'perfect match': summary['perfect_match'],
                'average match': summary['avg_match'],
                'sd': summary['match_sd'],
            })
        rows.append(row)
    return pd.DataFrame(rows)


def table_report(preset: TablePreset, reports: list[SimReport], include_records: bool = False) -> dict:
    frame = table_rows(preset, reports)
    return {
        'schema': 1,
        'kind': 'table',
        'preset': preset.name,
        'table': preset.table,
        'tau': preset.tau,
        'columns': list(frame.columns),
        'rows': frame.astype(object).where(frame.notna(), None).to_dict(orient='records'),
        'cells': [report.to_dict(include_records) for report in reports],
    }
