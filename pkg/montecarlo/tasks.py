"""
Celery tasks for distributed Monte Carlo replications.
"""

import logging

from celery import shared_task

logger = logging.getLogger(__name__)


@shared_task(bind=True, max_retries=2)
def run_replication_task(self, config: dict, rep: int, constants: list):
    """
    Run one replication on a worker.

    Args:
        config: SimConfig.to_dict() payload
        rep: replication index, which fixes the random stream
        constants: IC constants to score

    Returns:
        List of ReplicationRecord dicts, one per constant
    """
    from montecarlo.dgp import SimConfig
    from montecarlo.harness import run_replication

    try:
        records = run_replication(SimConfig.from_dict(config), rep, constants)
    except Exception as e:
        logger.error(f"Replication {rep} crashed on worker: {e}")
        raise self.retry(exc=e, countdown=10)
    return [record.to_dict() for record in records]
