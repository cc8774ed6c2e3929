"""
Общая конфигурация timecourse:
- settings: параметры из окружения (.env);
- exceptions: иерархия доменных ошибок;
- celery: приложение Celery для распределённого прогона реплик.
"""

from .celery import app as celery_app

__all__ = ("celery_app",)
