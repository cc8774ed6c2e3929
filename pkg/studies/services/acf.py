"""
Выборочная автокорреляционная функция отклика или остатков.
Делитель n (смещённая оценка), как в стандартной выборочной ACF.
"""

import logging
from typing import Any

import numpy as np
import pandas as pd
from statsmodels.tsa.stattools import acf as sample_acf

from config.exceptions import DataError, ParameterError, UndefinedVarianceError
from mixed.validators import check_columns

from .variants import fit_variant

logger = logging.getLogger(__name__)


def acf(series: Any, max_lag: int) -> np.ndarray:
    """Автокорреляции на лагах 0..max_lag; значение на лаге 0 равно 1."""
    values = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise DataError("Ряд содержит нечисловые значения.")
    if max_lag < 1 or values.size <= max_lag:
        raise ParameterError(
            f"Нужно 1 <= max_lag < длины ряда, получено max_lag={max_lag}, n={values.size}."
        )
    if np.ptp(values) == 0.0:
        raise UndefinedVarianceError("Ряд постоянен: автокорреляция не определена.")
    result = sample_acf(values, nlags=max_lag, adjusted=False, fft=True)
    result[0] = 1.0
    return result


def residual_acf(
    frame: pd.DataFrame,
    max_lag: int,
    column: str = "response",
    subject: int | None = None,
    model: str | None = None,
) -> pd.DataFrame:
    """
    ACF по субъектам в порядке проб.
    model: если задана, берутся остатки подгонки этой модели;
    subject: один субъект, иначе среднее ACF по всем субъектам.
    """
    check_columns(frame, ["subject", "trial", column])
    frame = frame.sort_values(["subject", "trial"], kind="stable").reset_index(drop=True)
    if model is not None:
        values = fit_variant(model, frame).residuals
    else:
        values = frame[column].to_numpy(dtype=float)
    series = pd.Series(values, index=frame.index)

    if subject is not None:
        rows = frame.index[frame["subject"] == subject]
        if rows.empty:
            raise DataError(f"Субъект {subject} отсутствует в данных.")
        result = acf(series.loc[rows], max_lag)
    else:
        per_subject = [acf(part, max_lag) for _, part in series.groupby(frame["subject"])]
        result = np.mean(per_subject, axis=0)
        logger.info("Pooled ACF over %s subjects", len(per_subject))
    return pd.DataFrame({"lag": np.arange(max_lag + 1), "acf": result})
