"""Entry point for the ``panelq`` console script and ``manage.py``."""
import os
import sys
from typing import Optional, Sequence


def main(argv: Optional[Sequence[str]] = None):
    """Run a panelq management command, e.g. ``panelq fit --input panel.csv``."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'panelq.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(list(argv) if argv is not None else ['panelq', *sys.argv[1:]])


if __name__ == '__main__':
    main()
