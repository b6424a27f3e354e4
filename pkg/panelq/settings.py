"""
Django settings for the panelq project.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.environ.get('SECRET_KEY', 'panelq-local-key')
DEBUG = os.environ.get('DEBUG', 'False').lower() in ('true', '1', 'yes')


# Application definition
INSTALLED_APPS = [
    # Local apps
    'panel.apps.PanelConfig',
    'estimation.apps.EstimationConfig',
    'montecarlo.apps.MontecarloConfig',
]


# Database
DATABASE_URL = os.environ.get('DATABASE_URL')

if DATABASE_URL:
    # Parse DATABASE_URL for a shared postgres run registry
    import re
    match = re.match(
        r'postgres(?:ql)?://(?P<user>[^:]+):(?P<password>[^@]+)@(?P<host>[^:]+):(?P<port>\d+)/(?P<name>.+)',
        DATABASE_URL
    )
    if match:
        DATABASES = {
            'default': {
                'ENGINE': 'django.db.backends.postgresql',
                'NAME': match.group('name'),
                'USER': match.group('user'),
                'PASSWORD': match.group('password'),
                'HOST': match.group('host'),
                'PORT': match.group('port'),
            }
        }
    else:
        raise ValueError(f"Invalid DATABASE_URL format: {DATABASE_URL}")
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': os.environ.get('PANELQ_DB_PATH', BASE_DIR / 'panelq.sqlite3'),
        }
    }

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'


# Celery Configuration
REDIS_URL = os.environ.get('REDIS_URL', 'redis://localhost:6379/0')
CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', REDIS_URL)
CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', REDIS_URL)
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'
CELERY_TASK_ALWAYS_EAGER = os.environ.get('CELERY_TASK_ALWAYS_EAGER', 'False').lower() in ('true', '1', 'yes')


# Worker concurrency for path sweeps, tau blocks and Monte Carlo replications
PANELQ_THREADS = int(os.environ.get('PANELQ_THREADS', os.cpu_count() or 1))
PANELQ_EXECUTION_BACKEND = os.environ.get('PANELQ_EXECUTION_BACKEND', 'local')


# Interior-point solver
PANELQ_GAP_TOL = float(os.environ.get('PANELQ_GAP_TOL', '1e-8'))
PANELQ_MAX_ITER = int(os.environ.get('PANELQ_MAX_ITER', '100'))
PANELQ_STEP_FRACTION = float(os.environ.get('PANELQ_STEP_FRACTION', '0.9995'))
PANELQ_WEIGHT_CAP = float(os.environ.get('PANELQ_WEIGHT_CAP', '1e8'))


# Grouping, selection and inference
PANELQ_FUSE_TOL = float(os.environ.get('PANELQ_FUSE_TOL', '1e-4'))
PANELQ_GRID = os.environ.get('PANELQ_GRID', '0:0.35:0.005')
PANELQ_PNT_CONSTANT = float(os.environ.get('PANELQ_PNT_CONSTANT', '0.1'))
PANELQ_C_MIN = float(os.environ.get('PANELQ_C_MIN', '1e-3'))
PANELQ_BANDWIDTH_RULE = os.environ.get('PANELQ_BANDWIDTH_RULE', 'hall-sheather')
PANELQ_HS_ALPHA = float(os.environ.get('PANELQ_HS_ALPHA', '0.05'))
PANELQ_DENSITY_FLOOR = float(os.environ.get('PANELQ_DENSITY_FLOOR', '1e-6'))


# Monte Carlo
PANELQ_DEFAULT_REPS = int(os.environ.get('PANELQ_DEFAULT_REPS', '200'))
PANELQ_MAX_FAILURE_RATE = float(os.environ.get('PANELQ_MAX_FAILURE_RATE', '0.01'))


# Logging
PANELQ_LOG_LEVEL = os.environ.get('PANELQ_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'panel': {'handlers': ['console'], 'level': PANELQ_LOG_LEVEL, 'propagate': False},
        'estimation': {'handlers': ['console'], 'level': PANELQ_LOG_LEVEL, 'propagate': False},
        'montecarlo': {'handlers': ['console'], 'level': PANELQ_LOG_LEVEL, 'propagate': False},
    },
}
