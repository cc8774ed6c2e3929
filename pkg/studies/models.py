"""
Конфигурация и итоги симуляционных исследований мощности и ошибки I рода.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import pandas as pd

from config import settings
from simulation.models import SimParams

MODEL_NAMES = ("LMMsine", "LMMmin", "LMMmax", "GAMMfs", "GAMMby")


@dataclass(frozen=True)
class StudyConfig:
    """
    Одно исследование: генератор, параметры, число реплик, уровни
    значимости и набор моделей. null_mode обнуляет эффекты обработок
    (исследование ошибки I рода).
    """

    generator: str = "amp_abs"
    params: SimParams = field(default_factory=SimParams)
    n_reps: int = settings.STUDY_REPLICATES
    alphas: tuple[float, ...] = settings.STUDY_ALPHAS
    models: tuple[str, ...] = MODEL_NAMES
    null_mode: bool = False
    base_seed: int = settings.DEFAULT_SEED
    k: int = settings.DEFAULT_BASIS_K
    m: int = 1

    @property
    def effective_params(self) -> SimParams:
        return self.params.null() if self.null_mode else self.params

    def replace(self, **changes: Any) -> "StudyConfig":
        return dataclasses.replace(self, **changes)

    def to_payload(self) -> dict[str, Any]:
        """JSON-совместимое представление для задач Celery."""
        return {
            "generator": self.generator,
            "params": self.params.to_dict(),
            "n_reps": self.n_reps,
            "alphas": list(self.alphas),
            "models": list(self.models),
            "null_mode": self.null_mode,
            "base_seed": self.base_seed,
            "k": self.k,
            "m": self.m,
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "StudyConfig":
        values = dict(payload)
        values["params"] = SimParams.from_dict(values["params"])
        values["alphas"] = tuple(values["alphas"])
        values["models"] = tuple(values["models"])
        return cls(**values)


@dataclass(frozen=True, eq=False)
class StudySummary:
    """
    Итоги исследования.
    rows: по (модель, коэффициент) средняя оценка, дисперсия оценок
    по репликам и число значимых реплик для каждого alpha;
    sd_means: средние оценки sd по моделям;
    failures: число несошедшихся реплик по моделям;
    records: сырые результаты реплик (упорядочены по номеру реплики).
    """

    config: StudyConfig
    rows: pd.DataFrame
    sd_means: pd.DataFrame
    failures: dict[str, int]
    records: tuple[dict[str, Any], ...] = ()

    def power(self, model: str, coefficient: str, alpha: float) -> float:
        """Доля значимых реплик среди успешных."""
        row = self.rows.loc[(model, coefficient)]
        return float(row[f"n_sig_{alpha:g}"] / row["n_ok"])

    def mean_sd(self, model: str, role: str) -> float:
        return float(self.sd_means.loc[model, role])
