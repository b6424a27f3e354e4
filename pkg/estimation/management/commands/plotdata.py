"""
Management command: extract long-format plot series from a fit or simulation report.
"""

from django.core.management.base import BaseCommand, CommandError

from estimation.reports import load_report, plot_series
from panel.exceptions import PanelqError


class Command(BaseCommand):
    help = 'Write plot-ready series (series,x,y,lo,hi) from a JSON report'

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help='JSON report written by fit or simulate')
        parser.add_argument('--output', help='CSV path (stdout when omitted)')

    def handle(self, *args, **options):
        try:
            frame = plot_series(load_report(options['input']))
        except PanelqError as e:
            raise CommandError(e.diagnostic(), returncode=e.exit_status)

        if options.get('output'):
            frame.to_csv(options['output'], index=False, float_format='%.17g')
            self.stdout.write(self.style.SUCCESS(
                f"Wrote {len(frame)} rows in {frame['series'].nunique()} series to {options['output']}"
            ))
        else:
            self.stdout.write(frame.to_csv(index=False, float_format='%.17g'), ending='')
