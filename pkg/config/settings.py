"""
Настройки проекта timecourse.
Файл содержит основные параметры движка и экспериментов:
- загрузка переменных окружения через dotenv;
- конфигурация логирования (dictConfig);
- параметры оптимизации REML;
- масштаб симуляционных исследований (desk-scale / full-scale);
- параметры Redis и Celery для распределённого прогона реплик.
Значения по умолчанию подходят для локальной работы.
Для длинных исследований на кластере необходимо:
    - задать TIMECOURSE_THREADS или поднять воркеры Celery;
    - настроить REDIS_HOST / REDIS_PASSWORD.
"""

import math
import os
from pathlib import Path

from dotenv import load_dotenv

# Загружаем переменные окружения из файла .env
load_dotenv()

# --------------------------------------------
# Базовая директория проекта
# --------------------------------------------
BASE_DIR = Path(__file__).resolve().parent.parent


def _float_pair(raw: str) -> tuple[float, float]:
    """Разбор пары чисел вида "lo,hi" из переменной окружения."""
    lo, hi = (float(part) for part in raw.split(","))
    return lo, hi


# --------------------------------------------
# Логирование
# --------------------------------------------

LOG_LEVEL = os.getenv("TIMECOURSE_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        # Лог пишем в stderr, чтобы не смешивать его с результатами в stdout
        "stderr": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "plain",
        },
    },
    "root": {
        "handlers": ["stderr"],
        "level": LOG_LEVEL,
    },
    "loggers": {
        "celery": {"level": "WARNING"},
    },
}


# --------------------------------------------
# Воспроизводимость
# --------------------------------------------

DEFAULT_SEED = int(os.getenv("TIMECOURSE_DEFAULT_SEED", "20210401"))

# Временная ось по умолчанию: полный период синуса
DEFAULT_T_DOMAIN = (0.0, 2.0 * math.pi)


# --------------------------------------------
# Сплайновые базисы
# --------------------------------------------

# Размерность базиса факторных сглаживаний (k=20 как в примерах исследования)
DEFAULT_BASIS_K = int(os.getenv("TIMECOURSE_BASIS_K", "20"))

# Число базисных функций генератора случайных кривых
DEFAULT_WIGGLY_K = int(os.getenv("TIMECOURSE_WIGGLY_K", "10"))


# --------------------------------------------
# Оптимизация REML
# --------------------------------------------

REML_MAX_ITER = int(os.getenv("TIMECOURSE_REML_MAX_ITER", "200"))

# Норма градиента, при которой оптимум считается найденным
REML_GRAD_TOL = float(os.getenv("TIMECOURSE_REML_GRAD_TOL", "1e-5"))

# Остаточная диагональ масштабированной матрицы, ниже которой
# разложение Холецкого с выбором ведущего элемента фиксирует потерю ранга
PIVOT_TOL = float(os.getenv("TIMECOURSE_PIVOT_TOL", "1e-11"))

# Допустимый диапазон log(lambda)
LOG_LAMBDA_BOUNDS = _float_pair(os.getenv("TIMECOURSE_LOG_LAMBDA_BOUNDS", "-20,30"))

# Диапазон логарифмов диагонали фактора Холецкого коррелированных блоков
LOG_CHOL_BOUNDS = (-15.0, 15.0)

# Шаг центральных конечных разностей по лог-параметрам
FD_STEP = float(os.getenv("TIMECOURSE_FD_STEP", "1e-4"))

# sd < ratio * sd(y) считается нулевой компонентой (граница)
BOUNDARY_SD_RATIO = float(os.getenv("TIMECOURSE_BOUNDARY_SD_RATIO", "1e-6"))


# --------------------------------------------
# Симуляционные исследования
# --------------------------------------------

STUDY_REPLICATES = int(os.getenv("TIMECOURSE_REPLICATES", "200"))
FULL_SCALE_REPLICATES = int(os.getenv("TIMECOURSE_FULL_SCALE_REPLICATES", "1000"))
STUDY_ALPHAS = (0.05, 0.01)
THREADS = int(os.getenv("TIMECOURSE_THREADS", "1"))

# Долгие Монте-Карло проверки в тестах включаются явно
SLOW_TESTS = os.getenv("TIMECOURSE_SLOW_TESTS", "0") == "1"


# --------------------------------------------
# Redis (для Celery)
# --------------------------------------------

REDIS_HOST = os.getenv("REDIS_HOST", "127.0.0.1")
REDIS_PORT = int(os.getenv("REDIS_PORT", "6379"))
REDIS_DB = int(os.getenv("REDIS_DB", "0"))
REDIS_PASSWORD = os.getenv("REDIS_PASSWORD", "")

if REDIS_PASSWORD:
    REDIS_URL = f"redis://:{REDIS_PASSWORD}@{REDIS_HOST}:{REDIS_PORT}/{REDIS_DB}"
else:
    REDIS_URL = f"redis://{REDIS_HOST}:{REDIS_PORT}/{REDIS_DB}"

# --------------------------------------------
# Celery
# --------------------------------------------

CELERY_BROKER_URL = REDIS_URL
CELERY_RESULT_BACKEND = REDIS_URL

CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"

# В тестах задачи выполняются синхронно в текущем процессе
CELERY_TASK_ALWAYS_EAGER = os.getenv("CELERY_TASK_ALWAYS_EAGER", "False") == "True"
CELERY_TASK_EAGER_PROPAGATES = True
