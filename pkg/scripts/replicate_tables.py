#!/usr/bin/env python
"""
Full simulation-table replication

Runs every table-row preset (tables 1-6, n in 30/60/90, T in 15/30/60) and
writes one JSON report and one CSV per preset. This is the long-running
target; expect hours on a workstation at the default 2000 replications.

Usage:
    python scripts/replicate_tables.py <output-dir> [reps] [seed]

Example:
    python scripts/replicate_tables.py results/ 400 42
"""

import os
import sys
from itertools import product
from pathlib import Path

# Add project root to path
project_root = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(project_root))

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'panelq.settings')

import django
django.setup()

from django.conf import settings

from estimation.reports import report_to_csv, write_report
from montecarlo.dgp import SimConfig
from montecarlo.harness import run_cell
from montecarlo.tables import TablePreset, preset_configs, table_report

TABLES = (1, 2, 3, 4, 5, 6)
SIZES = (30, 60, 90)
PERIODS = (15, 30, 60)


def replicate_row(preset: TablePreset, base: SimConfig, output_dir: Path, cache: dict) -> None:
    """Cells are shared between tables with the same tau, so each is simulated once."""
    reports = []
    for config in preset_configs(preset, base):
        if config not in cache:
            print(f"  Simulating {config.label} ({config.reps} reps)")
            cache[config] = run_cell(config, workers=settings.PANELQ_THREADS,
                                     backend=settings.PANELQ_EXECUTION_BACKEND,
                                     max_failure_rate=settings.PANELQ_MAX_FAILURE_RATE)
        reports.append(cache[config])
    report = table_report(preset, reports)
    write_report(report, output_dir / f'{preset.name}.json')
    report_to_csv(report, output_dir / f'{preset.name}.csv')
    flagged = [r.config.label for r in reports if r.flagged]
    if flagged:
        print(f"  Warning: failure rate too high in {', '.join(flagged)}")


def main():
    if len(sys.argv) < 2:
        print("Usage: python replicate_tables.py <output-dir> [reps] [seed]")
        print("Example: python replicate_tables.py results/ 400 42")
        sys.exit(1)

    output_dir = Path(sys.argv[1])
    reps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 42
    output_dir.mkdir(parents=True, exist_ok=True)

    base = SimConfig(reps=reps, seed=seed)
    print(f"Replicating {len(TABLES) * len(SIZES) * len(PERIODS)} table rows with {reps} reps, seed {seed}")

    cache = {}
    for table, n, t in product(TABLES, SIZES, PERIODS):
        preset = TablePreset(table, n, t)
        print(f"\nRow {preset.name}")
        replicate_row(preset, base, output_dir, cache)

    print(f"\n\nComplete! Wrote {len(TABLES) * len(SIZES) * len(PERIODS)} rows to {output_dir}")


if __name__ == '__main__':
    main()
