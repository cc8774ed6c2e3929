"""
Ковариатные выражения для случайных наклонов и фиксированных ковариат.
Выражение детерминированно вычисляется по столбцам таблицы данных.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from config.exceptions import DataError


@dataclass(frozen=True)
class Expression:
    label: str
    columns: tuple[str, ...]
    function: Callable[[pd.DataFrame], np.ndarray]

    def evaluate(self, frame: pd.DataFrame) -> np.ndarray:
        missing = [name for name in self.columns if name not in frame.columns]
        if missing:
            raise DataError(f"Нет столбцов для выражения {self.label}: {', '.join(missing)}.")

        values = np.asarray(self.function(frame), dtype=float)
        if values.shape != (len(frame),):
            raise DataError(f"Выражение {self.label} должно давать значение на каждую строку.")
        if not np.all(np.isfinite(values)):
            raise DataError(f"Выражение {self.label} даёт нечисловые значения.")
        return values


def column(name: str, label: str | None = None) -> Expression:
    """Числовой столбец как есть."""
    return Expression(
        label=label or name,
        columns=(name,),
        function=lambda frame: frame[name].to_numpy(dtype=float),
    )


def sine(name: str = "time") -> Expression:
    """sin(t): случайный коэффициент при синусе времени."""
    return Expression(
        label=f"sin({name.capitalize()})",
        columns=(name,),
        function=lambda frame: np.sin(frame[name].to_numpy(dtype=float)),
    )


def indicator(name: str, level: str) -> Expression:
    """Индикатор уровня фактора, например factor_withinB."""
    return Expression(
        label=f"{name}{level}",
        columns=(name,),
        function=lambda frame: (frame[name].astype(str) == level).to_numpy(dtype=float),
    )
