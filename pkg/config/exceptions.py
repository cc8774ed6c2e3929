"""
Иерархия ошибок timecourse.
Все доменные ошибки наследуются от TimecourseError; командная строка
превращает их в код возврата 1, а ошибки использования (click) в код 2.
"""

from typing import Any


class TimecourseError(Exception):
    """Базовая ошибка движка и экспериментов."""


class ParameterError(TimecourseError):
    """Недопустимые параметры генератора, исследования или базиса."""


class BasisDomainError(TimecourseError):
    """Значения ковариаты лежат вне области определения базиса."""


class InsufficientDataError(TimecourseError):
    """Точек данных меньше, чем базисных функций."""


class CenteringContractError(TimecourseError):
    """Нецентрированный блок передан туда, где требуется ортогональность к 1."""


class SpecificationError(TimecourseError):
    """Спецификация модели неразрешима на данных (алиасы, дубли, пересечения)."""


class DataError(TimecourseError):
    """Некорректные данные: неизвестный уровень, нет столбца, битый CSV."""


class NumericalError(TimecourseError):
    """Штрафованная система не является положительно определённой."""


class ConvergenceError(TimecourseError):
    """
    Оптимизатор REML не сошёлся.
    best: лучшее найденное состояние (параметры и значение критерия).
    """

    def __init__(self, message: str, best: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.best = best or {}


class StudyError(TimecourseError):
    """Все реплики исследования провалились для одной из моделей."""

    def __init__(self, message: str, model: str) -> None:
        super().__init__(message)
        self.model = model


class UndefinedVarianceError(TimecourseError):
    """Автокорреляция постоянного ряда не определена."""
