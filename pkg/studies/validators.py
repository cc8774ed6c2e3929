from config.exceptions import ParameterError

from .models import MODEL_NAMES, StudyConfig

STUDY_GENERATORS = ("amp", "amp_abs", "phase", "wiggly")


def validate_study_config(cfg: StudyConfig) -> StudyConfig:
    """
    Проверка конфигурации исследования:
    - n_reps >= 1, набор моделей непуст и без неизвестных имён;
    - уровни значимости в (0, 1);
    - k базиса и порядок штрафа допустимы.
    """
    if cfg.generator not in STUDY_GENERATORS:
        raise ParameterError(f"Неизвестный генератор: {cfg.generator}.")
    if cfg.n_reps < 1:
        raise ParameterError(f"Число реплик должно быть >= 1, получено {cfg.n_reps}.")
    if not cfg.models:
        raise ParameterError("Не задано ни одной модели.")
    unknown = [name for name in cfg.models if name not in MODEL_NAMES]
    if unknown:
        raise ParameterError(f"Неизвестные модели: {', '.join(unknown)}.")
    if len(set(cfg.models)) != len(cfg.models):
        raise ParameterError("Модели в исследовании повторяются.")
    if not cfg.alphas or not all(0.0 < a < 1.0 for a in cfg.alphas):
        raise ParameterError("Уровни значимости должны лежать в (0, 1).")
    if cfg.k < 4:
        raise ParameterError(f"k должно быть >= 4, получено {cfg.k}.")
    if cfg.m not in (1, 2):
        raise ParameterError(f"Порядок штрафа m должен быть 1 или 2, получено {cfg.m}.")
    if not 0 <= cfg.base_seed < 2**64:
        raise ParameterError("base_seed должен быть 64-битным неотрицательным целым.")
    return cfg
