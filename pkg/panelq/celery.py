"""
Celery configuration for the panelq project.

Replications of a Monte Carlo cell can be fanned out to Celery workers with
``PANELQ_EXECUTION_BACKEND=celery``; start a worker with
``celery -A panelq worker -l info``.
"""

import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'panelq.settings')

app = Celery('panelq')
app.config_from_object('django.conf:settings', namespace='CELERY')
app.autodiscover_tasks()
