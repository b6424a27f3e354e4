"""
Management command: Monte Carlo replications of the grouped fixed effects estimator.

Usage:
    panelq simulate --dgp 1 --model location --error normal --n 30 --t 60 --tau 0.5 --reps 200 --seed 42
    panelq simulate --sweep-constant 0.01:0.3:0.01 ...
    panelq simulate --paper-cell T1-n30-T60 --reps 400
"""

import json

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from estimation.path_grouping import LambdaGrid
from estimation.reports import report_to_json
from montecarlo.dgp import ERRORS, MODELS, SimConfig
from montecarlo.harness import EXECUTION_BACKENDS, constant_sweep, export_panel, run_cell, sweep_report, write_audit_csv
from montecarlo.tables import parse_preset, preset_configs, table_report
from panel.config import OptionResolver, load_config_file, parse_bool, parse_range
from panel.exceptions import ConfigError, PanelqError

CONFIG_KEYS = {
    'dgp', 'model', 'error', 'n', 't', 'tau', 'reps', 'seed', 'grid', 'pnt_constant',
    'sweep_constant', 'paper_cell', 'workers', 'backend', 'audit', 'export_panel', 'output', 'record',
}


class Command(BaseCommand):
    help = 'Run Monte Carlo replications of a simulation design cell'

    def add_arguments(self, parser):
        parser.add_argument('--dgp', type=int, choices=(1, 2), help='1: rho=0, 2: rho=0.5')
        parser.add_argument('--model', choices=MODELS)
        parser.add_argument('--error', choices=ERRORS)
        parser.add_argument('--n', type=int, help='Number of individuals')
        parser.add_argument('--t', type=int, help='Periods per individual')
        parser.add_argument('--tau', type=float, help='Quantile level')
        parser.add_argument('--reps', type=int, help='Replications (default PANELQ_DEFAULT_REPS)')
        parser.add_argument('--seed', type=int, help='64-bit seed')
        parser.add_argument('--grid', help='Lambda grid as min:max:step')
        parser.add_argument('--pnt-constant', type=float, help='Constant c in p_nt = c n T^(1/4)')
        parser.add_argument('--sweep-constant', help='Sweep c over min:max:step or a comma list')
        parser.add_argument('--paper-cell', help='Table-row preset such as T1-n30-T60')
        parser.add_argument('--workers', type=int, help='Local worker processes (default PANELQ_THREADS)')
        parser.add_argument('--backend', choices=EXECUTION_BACKENDS, help='local joblib pool or celery workers')
        parser.add_argument('--audit', help='Write one CSV row per replication here')
        parser.add_argument('--export-panel', help='Write the first replication panel as CSV here')
        parser.add_argument('--output', help='JSON report path (stdout when omitted)')
        parser.add_argument('--config', help='Flat key=value config file')
        parser.add_argument('--record', action='store_true', help='Store the report in the run registry')

    def handle(self, *args, **options):
        try:
            self._run(options)
        except PanelqError as e:
            raise CommandError(e.diagnostic(), returncode=e.exit_status)

    def _config(self, resolver: OptionResolver) -> SimConfig:
        defaults = SimConfig.__dataclass_fields__
        grid = resolver.get('grid')
        return SimConfig(
            dgp=resolver.get('dgp', int, defaults['dgp'].default),
            model=resolver.get('model', default=defaults['model'].default),
            error=resolver.get('error', default=defaults['error'].default),
            n=resolver.get('n', int, defaults['n'].default),
            t=resolver.get('t', int, defaults['t'].default),
            tau=resolver.get('tau', float, defaults['tau'].default),
            reps=resolver.get('reps', int, settings.PANELQ_DEFAULT_REPS),
            seed=resolver.get('seed', int, defaults['seed'].default),
            grid=LambdaGrid.from_spec(grid or settings.PANELQ_GRID),
            pnt_constant=resolver.get('pnt_constant', float, settings.PANELQ_PNT_CONSTANT),
        )

    def _run(self, options):
        resolver = OptionResolver(options, load_config_file(options.get('config')), CONFIG_KEYS)
        config = self._config(resolver)
        workers = resolver.get('workers', int, settings.PANELQ_THREADS)
        backend = resolver.get('backend', default=settings.PANELQ_EXECUTION_BACKEND)
        if backend not in EXECUTION_BACKENDS:
            raise ConfigError(f"Unknown execution backend '{backend}'")
        max_failure_rate = settings.PANELQ_MAX_FAILURE_RATE

        export = resolver.get('export_panel')
        if export:
            export_panel(config, 0, export)
            self.stderr.write(f'Wrote replication 0 panel to {export}')

        preset_name = resolver.get('paper_cell')
        sweep = resolver.get('sweep_constant')
        if preset_name:
            preset = parse_preset(preset_name)
            reports = [
                run_cell(cell, workers, backend, max_failure_rate=max_failure_rate)
                for cell in preset_configs(preset, config)
            ]
            report = table_report(preset, reports)
            label = preset.name
            flagged = any(r.flagged for r in reports)
            audit_source = None
        elif sweep:
            constants = parse_range(sweep)
            reports = constant_sweep(config, [config.pnt_constant, *constants], workers, backend, max_failure_rate=max_failure_rate)
            report = sweep_report(config, reports)
            label = f'{config.label}-sweep'
            audit_source = reports[config.pnt_constant]
            flagged = audit_source.flagged
        else:
            audit_source = run_cell(config, workers, backend, max_failure_rate=max_failure_rate)
            report = audit_source.to_dict()
            label = config.label
            flagged = audit_source.flagged

        audit = resolver.get('audit')
        if audit:
            if audit_source is None:
                raise ConfigError("--audit is not available with --paper-cell", code='E_CONFIG_AUDIT')
            write_audit_csv(audit_source, audit)
            self.stderr.write(f'Wrote per-replication audit to {audit}')

        output = resolver.get('output')
        text = report_to_json(report)
        if output:
            with open(output, 'w', encoding='utf-8') as f:
                f.write(text)
            self.stdout.write(self.style.SUCCESS(f'Wrote simulation report for {label} to {output}'))
        else:
            self.stdout.write(text, ending='')

        if resolver.get('record', parse_bool, False):
            from montecarlo.models import SimulationRun
            run = SimulationRun.objects.create(
                cell=label,
                reps=config.reps,
                seed=str(config.seed),
                config=config.to_dict(),
                report=json.loads(text),
                flagged=flagged,
            )
            self.stderr.write(f'Recorded simulation run {run.pk}')

        if flagged:
            self.stderr.write(self.style.WARNING(f'{label}: failure rate at or above {max_failure_rate:.0%}'))
