import numpy as np
import pandas as pd

from config.exceptions import DataError, SpecificationError

from .models import ModelSpec


def validate_model_spec(spec: ModelSpec) -> ModelSpec:
    """
    Проверка спецификации до сборки:
    - нет повторяющихся фиксированных членов;
    - не больше одного сглаживания на тройку (ковариата, группа, режим);
    - групповые сглаживания и наклоны заданы полностью.
    """
    if len(set(spec.fixed)) != len(spec.fixed):
        raise SpecificationError("Фиксированные члены повторяются.")

    seen: set[tuple[str, str | None, str]] = set()
    for smooth in spec.smooths:
        key = (smooth.covariate, smooth.group, smooth.mode)
        if key in seen:
            raise SpecificationError(f"Сглаживание {smooth.name} задано дважды.")
        seen.add(key)
        if smooth.mode != "population" and not smooth.group:
            raise SpecificationError(f"Для {smooth.mode} нужен группирующий фактор.")

    for term in spec.random:
        if term.form != "intercept" and term.expression is None:
            raise SpecificationError(f"Случайный член {term.form} требует выражения.")
    return spec


def check_columns(frame: pd.DataFrame, names: list[str]) -> None:
    missing = [name for name in dict.fromkeys(names) if name not in frame.columns]
    if missing:
        raise DataError(f"В данных нет столбцов: {', '.join(missing)}.")


def response_vector(frame: pd.DataFrame, name: str) -> np.ndarray:
    if frame.empty:
        raise DataError("Набор данных пуст.")
    try:
        y = frame[name].to_numpy(dtype=float)
    except (TypeError, ValueError) as exc:
        raise DataError(f"Отклик {name} должен быть числовым.") from exc
    if not np.all(np.isfinite(y)):
        raise DataError(f"Отклик {name} содержит нечисловые значения.")
    return y
