"""
Management command: grouped fixed effects quantile regression on a panel CSV.

Usage:
    panelq fit --input panel.csv --tau 0.1,0.25,0.5,0.75,0.9 --output report.json
"""

from django.core.management.base import BaseCommand, CommandError

from estimation.path_grouping import LambdaGrid
from estimation.reports import build_fit_report, report_to_csv, report_to_json, write_report
from estimation.selection import BANDWIDTH_RULES
from estimation.services import PipelineSettings, fit_taus
from panel.config import OptionResolver, load_config_file, parse_bool, parse_float_list
from panel.data import as_tau
from panel.exceptions import ConfigError, PanelqError
from panel.ingest import parse_panel_csv

CONFIG_KEYS = {
    'input', 'tau', 'grid', 'fuse_tol', 'pnt_constant', 'bandwidth',
    'output', 'format', 'workers', 'record',
}


class Command(BaseCommand):
    help = 'Estimate grouped fixed effects quantile regression with IC-selected groups'

    def add_arguments(self, parser):
        parser.add_argument('--input', help='Long-format panel CSV (id,time,y,x1,...)')
        parser.add_argument('--tau', help='Comma-separated quantile levels (default 0.5)')
        parser.add_argument('--grid', help='Lambda grid as min:max:step or a comma list')
        parser.add_argument('--fuse-tol', type=float, help='Fusion tolerance on the alpha scale')
        parser.add_argument('--pnt-constant', type=float, help='Constant c in p_nt = c n T^(1/4)')
        parser.add_argument('--bandwidth', choices=BANDWIDTH_RULES, help='Bandwidth rule for grouped standard errors')
        parser.add_argument('--output', help='Report path (stdout when omitted)')
        parser.add_argument('--format', choices=('json', 'csv'), help='Report format (default json)')
        parser.add_argument('--workers', type=int, help='Worker processes for the lambda path')
        parser.add_argument('--config', help='Flat key=value config file')
        parser.add_argument('--record', action='store_true', help='Store the report in the run registry')

    def handle(self, *args, **options):
        try:
            self._run(options)
        except PanelqError as e:
            raise CommandError(e.diagnostic(), returncode=e.exit_status)

    def _run(self, options):
        resolver = OptionResolver(options, load_config_file(options.get('config')), CONFIG_KEYS)
        source = resolver.get('input')
        if not source:
            raise ConfigError("--input is required", code='E_CONFIG_MISSING')
        taus = [as_tau(t) for t in resolver.get('tau', parse_float_list, [0.5])]
        grid = resolver.get('grid', default=None)
        pipeline = PipelineSettings.from_settings(
            grid=LambdaGrid.from_spec(grid) if grid else None,
            fuse_tol=resolver.get('fuse_tol', float),
            pnt_constant=resolver.get('pnt_constant', float),
            bandwidth_rule=resolver.get('bandwidth'),
            n_jobs=resolver.get('workers', int),
        )
        if pipeline.bandwidth_rule not in BANDWIDTH_RULES:
            raise ConfigError(f"Unknown bandwidth rule '{pipeline.bandwidth_rule}'")
        fmt = resolver.get('format', default='json')
        if fmt not in ('json', 'csv'):
            raise ConfigError(f"Unknown report format '{fmt}'")

        data = parse_panel_csv(source)
        blocks = fit_taus(data, taus, pipeline)
        report = build_fit_report(data, blocks, pipeline, source)

        output = resolver.get('output')
        if output:
            write_report(report, output, fmt)
            self.stdout.write(self.style.SUCCESS(f'Wrote {fmt} report for {len(blocks)} tau value(s) to {output}'))
        else:
            self.stdout.write(report_to_csv(report) if fmt == 'csv' else report_to_json(report), ending='')

        if resolver.get('record', parse_bool, False):
            from estimation.models import FitRun
            run = FitRun.record(report, source, taus)
            self.stderr.write(f'Recorded fit run {run.pk}')

        for block in blocks:
            if block.ok:
                self.stderr.write(f'tau={block.tau:g}: selected K={block.selection.k}')
        failed = [block for block in blocks if not block.ok]
        if failed:
            raise failed[0].error
