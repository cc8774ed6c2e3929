import logging
from typing import Any

from celery import shared_task

from .models import StudyConfig
from .services.power import run_replicate

logger = logging.getLogger(__name__)


@shared_task
def run_replicate_task(payload: dict[str, Any], replicate: int) -> dict[str, Any]:
    """
    Задача Celery: одна реплика исследования.
    payload: StudyConfig.to_payload(); результат JSON-совместим.
    """
    cfg = StudyConfig.from_payload(payload)
    logger.info("Running replicate %s of %s study", replicate, cfg.generator)
    return run_replicate(cfg, replicate)
