"""
Management command: list recorded fit and simulation runs.
"""

from django.core.management.base import BaseCommand

from estimation.models import FitRun
from montecarlo.models import SimulationRun


class Command(BaseCommand):
    help = 'List recent runs stored with --record'

    def add_arguments(self, parser):
        parser.add_argument('--limit', type=int, default=20, help='Number of runs of each kind to show')
        parser.add_argument('--kind', choices=('fit', 'simulation', 'all'), default='all')

    def handle(self, *args, **options):
        limit = options['limit']
        if options['kind'] in ('fit', 'all'):
            self.stdout.write(self.style.MIGRATE_HEADING('Fit runs'))
            for run in FitRun.objects.all()[:limit]:
                status = 'ok' if run.succeeded else 'failed'
                self.stdout.write(f'  #{run.pk} {run.created_at:%Y-%m-%d %H:%M} {run.input_path} tau={run.taus} K={run.selected_k} [{status}]')
        if options['kind'] in ('simulation', 'all'):
            self.stdout.write(self.style.MIGRATE_HEADING('Simulation runs'))
            for run in SimulationRun.objects.all()[:limit]:
                flag = ' FLAGGED' if run.flagged else ''
                self.stdout.write(f'  #{run.pk} {run.created_at:%Y-%m-%d %H:%M} {run.cell} reps={run.reps} seed={run.seed}{flag}')
